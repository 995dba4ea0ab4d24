//! Time-varying exposure models. For each period `k` and lag `m` the model
//! predicts the lag-`m` exposure from exposure/covariate history, evaluated
//! at any `t` in `[k, k+1)`. Fits run on pseudo-data: each at-risk
//! individual is replicated once per time bin, with the bin midpoint offset
//! `t - k` entering as a regular feature and the row weighted by the at-risk
//! indicator times the risk-set adjusting weight.

use crate::error::{Error, Result};
use crate::learners::{self, Dataset, LearnerSpec, Predictor};
use crate::panel::{Individual, Panel, TimeGrid};
use crate::terminal::AlphaWeights;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Number of prior exposures included as features.
pub const EXPOSURE_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MuFlavor {
    /// Weighted least squares with identity link.
    Parametric,
    /// Arbitrary learner on the same pseudo-data.
    Nonparametric,
}

/// Deterministic map from an individual and a time point to a feature row
/// for the `(k, m)` exposure model: the last [`EXPOSURE_WINDOW`] exposures
/// before the target period (zero-padded past the start of baseline, with a
/// pad indicator), the covariate row of the target period, the target period
/// index, and the within-period offset `t - k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureBuilder {
    pub k: usize,
    pub m: usize,
    baseline_len: usize,
    cov_width: usize,
}

impl FeatureBuilder {
    pub fn new(panel: &Panel, k: usize, m: usize) -> Self {
        Self {
            k,
            m,
            baseline_len: panel.baseline_len,
            cov_width: panel.cov_width,
        }
    }

    pub fn width(&self) -> usize {
        EXPOSURE_WINDOW + 1 + self.cov_width + 2
    }

    pub fn build(&self, ind: &Individual, t: f64, out: &mut Vec<f64>) {
        out.clear();
        let target = self.k as i64 - self.m as i64;
        let mut padded = false;
        for lag in 1..=EXPOSURE_WINDOW as i64 {
            match ind.exposure(target - lag) {
                Some(a) => out.push(a),
                None => {
                    out.push(0.0);
                    padded = true;
                }
            }
        }
        out.push(if padded { 1.0 } else { 0.0 });
        if self.cov_width > 0 {
            let row = ind
                .covariates_at(target)
                .expect("at-risk individual has covariates for the target period");
            out.extend_from_slice(row);
        }
        out.push(target as f64);
        out.push(t - self.k as f64);
    }
}

/// Pseudo-data for one `(k, m)` fit: one row per at-risk individual per time
/// bin.
#[derive(Debug, Clone)]
pub struct PseudoData {
    pub dataset: Dataset,
    pub features: FeatureBuilder,
    /// Panel index of the individual behind each row.
    pub row_individual: Vec<usize>,
}

/// Build the exposure-model pseudo-data for `(k, m)`. Returns `None` when no
/// row carries positive weight (empty risk set), which callers treat as a
/// skipped period.
pub fn build_pseudo_mu(
    panel: &Panel,
    subset: Option<&[usize]>,
    k: usize,
    m: usize,
    grid: &TimeGrid,
    alpha: &AlphaWeights,
) -> Result<Option<PseudoData>> {
    let target = k as i64 - m as i64;
    if target < -(panel.baseline_len as i64) {
        return Err(Error::MissingHistory { k, m });
    }
    let features = FeatureBuilder::new(panel, k, m);
    let width = features.width();

    let indices: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..panel.n()).collect(),
    };

    let bins = grid.bins_per_period();
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    let mut row_individual = Vec::new();
    let mut row = Vec::with_capacity(width);
    let mut any_positive = false;

    for &i in &indices {
        let ind = &panel.individuals[i];
        if ind.at_risk(k as f64) == 0.0 {
            continue;
        }
        let a_target = ind
            .exposure(target)
            .ok_or(Error::MissingHistory { k, m })?;
        for t in grid.midpoints(k) {
            let w = ind.at_risk(t) * alpha.weight(ind, k, m, t);
            features.build(ind, t, &mut row);
            feats.extend_from_slice(&row);
            targets.push(a_target);
            weights.push(w);
            row_individual.push(i);
            if w > 0.0 {
                any_positive = true;
            }
        }
        let _ = bins;
    }

    if !any_positive {
        return Ok(None);
    }
    let dataset = Dataset::new(feats, width, targets, weights)?;
    Ok(Some(PseudoData {
        dataset,
        features,
        row_individual,
    }))
}

/// A fitted (or injected) exposure model for one `(k, m)` pair.
#[derive(Clone)]
pub struct MuFit {
    pub k: usize,
    pub m: usize,
    pub flavor: MuFlavor,
    source: MuSource,
}

#[derive(Clone)]
enum MuSource {
    Fitted {
        predictor: Predictor,
        features: FeatureBuilder,
    },
    Oracle(Arc<dyn Fn(&Individual, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for MuFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            MuSource::Fitted { .. } => "fitted",
            MuSource::Oracle(_) => "oracle",
        };
        write!(
            f,
            "MuFit(k={}, m={}, {:?}, {kind})",
            self.k, self.m, self.flavor
        )
    }
}

impl MuFit {
    /// Wrap an arbitrary function of `(individual, t)` as an exposure model;
    /// used to inject known or hand-set nuisances.
    pub fn from_fn<F>(k: usize, m: usize, f: F) -> Self
    where
        F: Fn(&Individual, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            k,
            m,
            flavor: MuFlavor::Parametric,
            source: MuSource::Oracle(Arc::new(f)),
        }
    }

    pub fn predictor(&self) -> Option<&Predictor> {
        match &self.source {
            MuSource::Fitted { predictor, .. } => Some(predictor),
            MuSource::Oracle(_) => None,
        }
    }

    /// Evaluate the model at `t` in `[k, k+1)`.
    pub fn eval(&self, ind: &Individual, t: f64) -> Result<f64> {
        let k = self.k as f64;
        if !(t >= k && t < k + 1.0) {
            return Err(Error::OutOfWindow { t, k: self.k });
        }
        let v = match &self.source {
            MuSource::Fitted {
                predictor,
                features,
            } => {
                let mut row = Vec::with_capacity(features.width());
                features.build(ind, t, &mut row);
                predictor.predict_row_unchecked(&row)
            }
            MuSource::Oracle(f) => f(ind, t),
        };
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "exposure model at k={}, m={}",
                self.k, self.m
            )));
        }
        Ok(v)
    }
}

/// Fit the `(k, m)` exposure model. `subset` restricts the pseudo-data to a
/// training split. Returns `None` for a skipped (empty risk set) period.
#[allow(clippy::too_many_arguments)]
pub fn fit_mu(
    panel: &Panel,
    subset: Option<&[usize]>,
    k: usize,
    m: usize,
    grid: &TimeGrid,
    alpha: &AlphaWeights,
    spec: &LearnerSpec,
    flavor: MuFlavor,
) -> Result<Option<MuFit>> {
    let Some(pseudo) = build_pseudo_mu(panel, subset, k, m, grid, alpha)? else {
        return Ok(None);
    };
    let effective_spec = match flavor {
        MuFlavor::Parametric => &LearnerSpec::Linear,
        MuFlavor::Nonparametric => spec,
    };
    let predictor = learners::fit(effective_spec, &pseudo.dataset)?;
    Ok(Some(MuFit {
        k,
        m,
        flavor,
        source: MuSource::Fitted {
            predictor,
            features: pseudo.features,
        },
    }))
}

/// Exposure models for one lag, indexed by period; `None` marks skipped
/// periods.
pub type MuFits = Vec<Option<MuFit>>;

/// Fit the lag-`m` exposure model for every period, in parallel. Periods
/// with insufficient lag history, an empty risk set, or too few at-risk
/// individuals to identify the fit are skipped (`None`); callers record
/// them as skipped periods.
pub fn fit_mu_all(
    panel: &Panel,
    subset: Option<&[usize]>,
    m: usize,
    grid: &TimeGrid,
    alpha: &AlphaWeights,
    spec: &LearnerSpec,
    flavor: MuFlavor,
) -> Result<MuFits> {
    use rayon::prelude::*;
    (0..=panel.horizon)
        .into_par_iter()
        .map(|k| {
            if (k as i64 - m as i64) < -(panel.baseline_len as i64) {
                return Ok(None);
            }
            match fit_mu(panel, subset, k, m, grid, alpha, spec, flavor) {
                Err(Error::DegenerateDesign(_)) => Ok(None),
                other => other,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// M=2, K=4, tau=4.5, p=1 panel with hand-set values.
    fn toy_panel() -> Panel {
        let mk = |id: u64, x: f64, expo: Vec<f64>, events: Vec<f64>| {
            let rows = 2 + (x.floor() as usize).min(4) + 1;
            Individual::new(id, 2, expo, vec![0.1; rows], 1, events, x, false)
        };
        Panel::new(
            vec![
                mk(0, 4.5, vec![0.5, 1.0, 0.25, 0.75, 0.5, 1.0, 0.0], vec![0.4]),
                mk(1, 4.5, vec![0.25, 0.5, 1.0, 0.75, 0.25, 0.5, 1.0], vec![]),
                mk(2, 4.5, vec![1.0, 0.75, 0.5, 0.25, 0.0, 0.25, 0.5], vec![1.2]),
            ],
            2,
            4.5,
            1,
        )
    }

    #[test]
    fn pseudo_rows_lag0_counts_and_weights() {
        let panel = toy_panel();
        let grid = TimeGrid::default();
        let alpha = AlphaWeights::from_values(vec![0.0; 3], None);
        let pd = build_pseudo_mu(&panel, None, 2, 0, &grid, &alpha)
            .unwrap()
            .unwrap();
        assert_eq!(pd.dataset.n_rows(), 15); // 3 alive x 5 bins
        for i in 0..pd.dataset.n_rows() {
            assert_eq!(pd.dataset.weight(i), 1.0); // lag-0 weight is the at-risk indicator
        }
    }

    #[test]
    fn lag1_weight_is_one_when_exposure_zero() {
        let mut panel = toy_panel();
        // zero out A_k for individual 0 at k=2
        let expo = vec![0.5, 1.0, 0.25, 0.75, 0.0, 1.0, 0.0];
        panel.individuals[0] =
            Individual::new(0, 2, expo, vec![0.1; 7], 1, vec![0.4], 4.5, false);
        let grid = TimeGrid::default();
        let alpha = AlphaWeights::from_values(vec![0.1, 0.05], None);
        let pd = build_pseudo_mu(&panel, None, 2, 1, &grid, &alpha)
            .unwrap()
            .unwrap();
        for (row, &ind) in pd.row_individual.iter().enumerate() {
            if ind == 0 {
                assert_eq!(pd.dataset.weight(row), 1.0);
            }
        }
    }

    #[test]
    fn lag1_weight_hand_value() {
        // exponent A_k * alpha_0 * (t - k) with A_k = 2, alpha_0 = 0.1,
        // t - k = 0.5 gives exp(0.1)
        let mut panel = toy_panel();
        let expo = vec![0.5, 1.0, 0.25, 0.75, 2.0, 1.0, 0.0];
        panel.individuals[0] =
            Individual::new(0, 2, expo, vec![0.1; 7], 1, vec![0.4], 4.5, false);
        let grid = TimeGrid::new(1); // single bin, midpoint offset 0.5
        let alpha = AlphaWeights::from_values(vec![0.1, 0.0], None);
        let pd = build_pseudo_mu(&panel, None, 2, 1, &grid, &alpha)
            .unwrap()
            .unwrap();
        let row = pd.row_individual.iter().position(|&i| i == 0).unwrap();
        assert_abs_diff_eq!(
            pd.dataset.weight(row),
            1.1051709180756477, // exp(0.1), hand evaluated
            epsilon = 1e-12
        );
    }

    #[test]
    fn constant_exposure_predicts_constant() {
        let mut panel = toy_panel();
        for i in 0..3 {
            let id = panel.individuals[i].id;
            panel.individuals[i] =
                Individual::new(id, 2, vec![0.7; 7], vec![0.1 * i as f64; 7], 1, vec![], 4.5, false);
        }
        let grid = TimeGrid::default();
        let alpha = AlphaWeights::from_values(vec![0.0; 2], None);
        let fit = fit_mu(
            &panel,
            None,
            2,
            0,
            &grid,
            &alpha,
            &LearnerSpec::Linear,
            MuFlavor::Parametric,
        )
        .unwrap()
        .unwrap();
        for ind in &panel.individuals {
            for t in [2.0, 2.3, 2.9] {
                assert_abs_diff_eq!(fit.eval(ind, t).unwrap(), 0.7, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn out_of_window_rejected() {
        let panel = toy_panel();
        let fit = MuFit::from_fn(2, 0, |_, _| 0.5);
        let ind = &panel.individuals[0];
        assert!(fit.eval(ind, 2.0).is_ok());
        assert!(matches!(
            fit.eval(ind, 3.0),
            Err(Error::OutOfWindow { .. })
        ));
        assert!(matches!(
            fit.eval(ind, 1.99),
            Err(Error::OutOfWindow { .. })
        ));
    }

    #[test]
    fn single_individual_parametric_is_degenerate() {
        let panel = toy_panel();
        let grid = TimeGrid::default();
        let alpha = AlphaWeights::from_values(vec![0.0; 2], None);
        let res = fit_mu(
            &panel,
            Some(&[0]),
            2,
            0,
            &grid,
            &alpha,
            &LearnerSpec::Linear,
            MuFlavor::Parametric,
        );
        assert!(matches!(res, Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn time_dependence_only_through_offset() {
        // two periods, same histories shifted, equal offsets give equal
        // predictions from the injected model
        let panel = toy_panel();
        let f = MuFit::from_fn(2, 0, |ind: &Individual, t: f64| {
            0.3 + 0.1 * (t - 2.0) + 0.01 * ind.exposure(1).unwrap()
        });
        let ind = &panel.individuals[0];
        let a = f.eval(ind, 2.25).unwrap();
        let b = f.eval(ind, 2.25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn residual_orthogonality_parametric() {
        use crate::simulate::{simulate_study, Scenario, SimConfig};
        let (panel, _) = simulate_study(&SimConfig::new(60, Scenario::Simple, 13)).unwrap();
        let grid = TimeGrid::default();
        let alpha = AlphaWeights::from_values(vec![0.02, 0.01], None);
        let (k, m) = (3usize, 1usize);
        let pd = build_pseudo_mu(&panel, None, k, m, &grid, &alpha)
            .unwrap()
            .unwrap();
        let fitted = fit_mu(
            &panel,
            None,
            k,
            m,
            &grid,
            &alpha,
            &LearnerSpec::Linear,
            MuFlavor::Parametric,
        )
        .unwrap()
        .unwrap();
        let width = pd.dataset.n_cols();
        // weighted residual-feature correlations vanish at the WLS optimum
        let mut moments = vec![0.0; width];
        let mut resid_norm = 0.0;
        let mut feat_norm = vec![0.0; width];
        for i in 0..pd.dataset.n_rows() {
            let row = pd.dataset.row(i);
            let ind = &panel.individuals[pd.row_individual[i]];
            let t = k as f64 + row[width - 1];
            let resid = pd.dataset.target(i) - fitted.eval(ind, t).unwrap();
            let w = pd.dataset.weight(i);
            resid_norm += w * resid * resid;
            for j in 0..width {
                moments[j] += w * resid * row[j];
                feat_norm[j] += w * row[j] * row[j];
            }
        }
        for j in 0..width {
            let scale = (resid_norm.sqrt() * feat_norm[j].sqrt()).max(1e-12);
            let rel = moments[j].abs() / scale;
            assert!(rel < 1e-6, "feature {j} moment {} (rel {rel})", moments[j]);
        }
    }
}
