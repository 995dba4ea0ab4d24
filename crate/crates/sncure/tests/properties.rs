//! Property tests for the structural invariants.

use proptest::prelude::*;
use sncure::counterfactual::averted_for_beta;
use sncure::learners::{fit, Dataset, LearnerSpec, Predictor};
use sncure::panel::{Individual, Panel};
use sncure::simulate::{simulate_study, Scenario, SimConfig};
use sncure::terminal::AlphaWeights;

fn individual_with_events(events: Vec<f64>, x: f64) -> Individual {
    let rows = 2 + (x.floor() as usize).min(10) + 1;
    Individual::new(0, 2, vec![0.5; 13], vec![0.0; rows], 1, events, x, false)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn event_counts_partition_additively(
        raw in prop::collection::vec(0.001f64..9.999, 0..25),
    ) {
        let mut events = raw;
        events.sort_by(f64::total_cmp);
        events.dedup();
        let ind = individual_with_events(events.clone(), 10.0);
        let total = ind.events_in(0.0, 10.0).0;
        let by_period: usize = (0..10)
            .map(|k| ind.events_in(k as f64, k as f64 + 1.0).0)
            .sum();
        prop_assert_eq!(total, by_period);
        prop_assert_eq!(total, events.len());
    }

    #[test]
    fn at_risk_is_non_increasing(x in 0.1f64..10.0, steps in 2usize..50) {
        let ind = individual_with_events(vec![], x);
        let mut prev = f64::INFINITY;
        for s in 0..steps {
            let t = 10.0 * s as f64 / steps as f64;
            let y = ind.at_risk(t);
            prop_assert!(y <= prev);
            prev = y;
        }
    }

    #[test]
    fn unit_weight_when_exposures_zero(
        alpha in prop::collection::vec(-0.5f64..0.5, 1..5),
        offset in 0.0f64..1.0,
    ) {
        let ind = Individual::new(0, 2, vec![0.0; 13], vec![0.0; 13], 1, vec![], 10.0, false);
        let m = alpha.len();
        let w = AlphaWeights::from_values(alpha, None);
        let t = 4.0 + offset.min(0.999);
        prop_assert_eq!(w.weight(&ind, 4, m, t), 1.0);
    }

    #[test]
    fn weight_log_linear_in_offset(
        alpha in prop::collection::vec(-0.3f64..0.3, 2..4),
        expo in prop::collection::vec(0.0f64..1.0, 13),
    ) {
        let ind = Individual::new(0, 2, expo, vec![0.0; 13], 1, vec![], 10.0, false);
        let m = alpha.len();
        let w = AlphaWeights::from_values(alpha, None);
        let f = |t: f64| w.weight(&ind, 5, m, t).ln();
        let (a, b, c) = (f(5.1), f(5.5), f(5.9));
        prop_assert!(((b - a) - (c - b)).abs() < 1e-9);
    }

    #[test]
    fn averted_monotone_in_cap_and_linear_in_beta(
        beta in prop::collection::vec(0.0f64..0.3, 1..4),
        expo in prop::collection::vec(0.0f64..2.0, 13),
        cap_lo in 0.05f64..1.0,
        cap_hi_mult in 1.0f64..3.0,
    ) {
        let ind = Individual::new(0, 2, expo, vec![0.0; 13], 1, vec![], 10.0, false);
        let panel = Panel::new(vec![ind], 2, 10.0, 1);
        let cap_hi = cap_lo * cap_hi_mult;
        let (lo_val, _) = averted_for_beta(&panel, &beta, cap_lo, 10.0);
        let (hi_val, _) = averted_for_beta(&panel, &beta, cap_hi, 10.0);
        // tighter caps avert at least as много events when all effects are
        // nonnegative
        prop_assert!(lo_val >= hi_val - 1e-12);

        let doubled: Vec<f64> = beta.iter().map(|b| 2.0 * b).collect();
        let (twice, _) = averted_for_beta(&panel, &doubled, cap_lo, 10.0);
        prop_assert_eq!(2.0 * lo_val, twice);
    }

    #[test]
    fn ensemble_weights_stay_on_simplex(
        ys in prop::collection::vec(-3.0f64..3.0, 24..60),
    ) {
        let n = ys.len();
        let feats: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let data = Dataset::unweighted(feats, 1, ys).unwrap();
        let spec = LearnerSpec::Ensemble(vec![
            LearnerSpec::Linear,
            LearnerSpec::Gbt(sncure::learners::GbtParams::new(20, 0.1)),
        ]);
        let p = fit(&spec, &data).unwrap();
        let Predictor::Ensemble(m) = &p else { panic!() };
        let sum: f64 = m.members.iter().map(|(w, _)| w).sum();
        prop_assert!(m.members.iter().all(|(w, _)| *w >= 0.0));
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn simulated_studies_always_validate(
        n in 3usize..25,
        seed in 0u64..500,
        complex in any::<bool>(),
        frailty in prop::sample::select(vec![0.0, 0.1, 0.2, 0.5]),
    ) {
        let mut cfg = SimConfig::new(
            n,
            if complex { Scenario::Complex } else { Scenario::Simple },
            seed,
        );
        cfg.frailty_mean = frailty;
        let (panel, _) = simulate_study(&cfg).unwrap();
        let report = panel.validate();
        prop_assert!(report.passed(), "{}", report);
    }
}
