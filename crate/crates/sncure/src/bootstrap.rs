//! Bootstrap inference: individuals are resampled with replacement keeping
//! their entire trajectory, every model component is refit per replicate,
//! and normal-approximation intervals are centered on the original point
//! estimate.

use crate::error::{Error, Result};
use crate::panel::{Individual, Panel};
use crate::parametric::{EffectEstimates, Method};
use crate::rngutil::stream_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// One row of lagged estimates per retained replicate.
    pub replicates: Vec<Vec<f64>>,
    /// `sqrt(R^-1 sum (b - mean)^2)` per lag over retained replicates.
    pub se: Vec<f64>,
    pub ci_level: f64,
    pub method: Method,
    /// Replicates dropped after exhausting retries.
    pub excluded: usize,
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Resample a panel with replacement using the given draw; ids are
/// reassigned sequentially so the resample is itself a valid panel.
pub fn resample(panel: &Panel, draws: &[usize]) -> Panel {
    let individuals: Vec<Individual> = draws
        .iter()
        .enumerate()
        .map(|(new_id, &i)| {
            let mut ind = panel.individuals[i].clone();
            ind.id = new_id as u64;
            ind
        })
        .collect();
    Panel::new(
        individuals,
        panel.baseline_len,
        panel.tau,
        panel.cov_width,
    )
}

const MAX_RETRIES: usize = 3;
const MAX_EXCLUDED_FRACTION: f64 = 0.10;

/// Run `r` bootstrap replicates of `fit_fn`. Each replicate gets its own
/// RNG stream derived from `(seed, replicate)`, so parallel execution is
/// reproducible. A replicate that fails (degenerate resample) is retried
/// with a fresh draw up to 3 times, then excluded; more than 10% exclusions
/// is an error.
pub fn bootstrap<F>(
    panel: &Panel,
    fit_fn: F,
    r: usize,
    seed: u64,
    ci_level: f64,
    method: Method,
) -> Result<BootstrapResult>
where
    F: Fn(&Panel, u64) -> Result<EffectEstimates> + Sync,
{
    if r < 1 {
        return Err(Error::InvalidConfig("bootstrap needs r >= 1".into()));
    }
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(Error::InvalidConfig("ci level must be in (0, 1)".into()));
    }
    let n = panel.n();

    let outcomes: Vec<Option<Vec<f64>>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(seed, rep as u64));
            for _attempt in 0..=MAX_RETRIES {
                let draws: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let fit_seed = rng.random::<u64>();
                let resampled = resample(panel, &draws);
                match fit_fn(&resampled, fit_seed) {
                    Ok(est) => return Some(est.beta),
                    Err(_) => continue,
                }
            }
            None
        })
        .collect();

    let replicates: Vec<Vec<f64>> = outcomes.iter().flatten().cloned().collect();
    let excluded = r - replicates.len();
    if excluded as f64 > MAX_EXCLUDED_FRACTION * r as f64 {
        return Err(Error::BootstrapFailure { excluded, total: r });
    }
    if replicates.is_empty() {
        return Err(Error::BootstrapFailure { excluded, total: r });
    }

    let dims = replicates[0].len();
    if replicates.iter().any(|b| b.len() != dims) {
        return Err(Error::DimensionMismatch(
            "replicates disagree on lag count".into(),
        ));
    }
    let rr = replicates.len() as f64;
    let se: Vec<f64> = (0..dims)
        .map(|m| {
            let mean = replicates.iter().map(|b| b[m]).sum::<f64>() / rr;
            let var = replicates.iter().map(|b| (b[m] - mean).powi(2)).sum::<f64>() / rr;
            var.sqrt()
        })
        .collect();

    Ok(BootstrapResult {
        replicates,
        se,
        ci_level,
        method,
        excluded,
    })
}

/// Attach bootstrap standard errors and normal-approximation intervals to a
/// point estimate.
pub fn summarize(result: &BootstrapResult, point: &EffectEstimates) -> Result<EffectEstimates> {
    if result.se.len() != point.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} standard errors for {} lags",
            result.se.len(),
            point.beta.len()
        )));
    }
    let z = normal_quantile(0.5 * (1.0 + result.ci_level));
    let ci: Vec<(f64, f64)> = point
        .beta
        .iter()
        .zip(&result.se)
        .map(|(b, s)| (b - z * s, b + z * s))
        .collect();
    let mut out = point.clone();
    out.se = Some(result.se.clone());
    out.ci = Some(ci);
    out.ci_level = Some(result.ci_level);
    Ok(out)
}
