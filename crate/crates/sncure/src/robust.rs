//! Cross-fitted robust estimator. Nuisances (exposure model and the
//! blipped-down outcome rate) are trained on each fold's complement and
//! evaluated on the fold; the lag-`m` effect then solves a single pooled
//! ratio whose denominator centers the unknown on the exposure residual.

use crate::error::{Error, Result};
use crate::estimating::{accumulate_step, solve_ratio, DenKind, JumpKind, StepDiag, StepSums};
use crate::exposure::{fit_mu_all, FeatureBuilder, MuFits, MuFlavor};
use crate::learners::{self, Dataset, LearnerSpec};
use crate::panel::{Individual, Panel, TimeGrid};
use crate::parametric::{EffectEstimates, Method};
use crate::rngutil::stream_seed;
use crate::terminal::AlphaWeights;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Random partition of the cohort into `v` near-equal folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub v: usize,
    /// Fold index per panel position.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Split `n` individuals uniformly at random into `v` folds whose sizes
/// differ by at most one. Deterministic in `seed`.
pub fn make_folds(n: usize, v: usize, seed: u64) -> Result<FoldPlan> {
    if v < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    if n < v {
        return Err(Error::TooFewIndividuals { need: v, have: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(seed, 0x666f6c64));
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % v;
    }
    Ok(FoldPlan {
        v,
        assignment,
        seed,
    })
}

/// Outcome-rate nuisance for one `(k, m)`: the conditional per-unit-time
/// rate of blipped-down events, evaluable on `[k, k+1)`.
#[derive(Clone)]
pub struct RhoFit {
    pub k: usize,
    pub m: usize,
    source: RhoSource,
}

#[derive(Clone)]
enum RhoSource {
    Fitted {
        predictor: learners::Predictor,
        features: FeatureBuilder,
        bin_width: f64,
    },
    OracleRate(Arc<dyn Fn(&Individual, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for RhoFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            RhoSource::Fitted { .. } => "fitted",
            RhoSource::OracleRate(_) => "oracle",
        };
        write!(f, "RhoFit(k={}, m={}, {kind})", self.k, self.m)
    }
}

impl RhoFit {
    /// Wrap a per-unit-time rate function; used to inject known rates.
    pub fn from_rate_fn<F>(k: usize, m: usize, f: F) -> Self
    where
        F: Fn(&Individual, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            k,
            m,
            source: RhoSource::OracleRate(Arc::new(f)),
        }
    }

    /// Per-unit-time rate at `t` in `[k, k+1)`. Fitted models predict
    /// per-bin masses, so the prediction is scaled by the training bin
    /// width.
    pub fn eval_rate(&self, ind: &Individual, t: f64) -> Result<f64> {
        let k = self.k as f64;
        if !(t >= k && t < k + 1.0) {
            return Err(Error::OutOfWindow { t, k: self.k });
        }
        let v = match &self.source {
            RhoSource::Fitted {
                predictor,
                features,
                bin_width,
            } => {
                let mut row = Vec::with_capacity(features.width());
                features.build(ind, t, &mut row);
                predictor.predict_row_unchecked(&row) / bin_width
            }
            RhoSource::OracleRate(f) => f(ind, t),
        };
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "outcome rate at k={}, m={}",
                self.k, self.m
            )));
        }
        Ok(v)
    }
}

pub type RhoFits = Vec<Option<RhoFit>>;

/// Per-bin targets for the outcome-rate fit: events in the bin minus the
/// blip of already-estimated more-recent effects over the bin width.
pub fn rho_target(
    ind: &Individual,
    k: usize,
    bin_lo: f64,
    bin_hi: f64,
    beta_prefix: &[f64],
) -> Result<f64> {
    let count = ind.events_in(bin_lo, bin_hi).0 as f64;
    let mut blip = 0.0;
    for (j, b) in beta_prefix.iter().enumerate() {
        let a = ind
            .exposure(k as i64 - j as i64)
            .ok_or(Error::MissingHistory { k, m: j })?;
        blip += a * b;
    }
    Ok(count - blip * (bin_hi - bin_lo))
}

/// Fit the `(k, m)` outcome-rate nuisance on the given individuals. Returns
/// `None` for an empty risk set.
#[allow(clippy::too_many_arguments)]
pub fn fit_rho(
    panel: &Panel,
    subset: Option<&[usize]>,
    k: usize,
    m: usize,
    grid: &TimeGrid,
    alpha: &AlphaWeights,
    beta_prefix: &[f64],
    spec: &LearnerSpec,
) -> Result<Option<RhoFit>> {
    if (k as i64 - m as i64) < -(panel.baseline_len as i64) {
        return Err(Error::MissingHistory { k, m });
    }
    let features = FeatureBuilder::new(panel, k, m);
    let width = features.width();
    let bin_width = grid.bin_width();

    let mut indices: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..panel.n()).collect(),
    };
    indices.sort_by_key(|&i| panel.individuals[i].id);

    let mut feats = Vec::new();
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    let mut row = Vec::with_capacity(width);
    let mut any_positive = false;

    for &i in &indices {
        let ind = &panel.individuals[i];
        if ind.at_risk(k as f64) == 0.0 {
            continue;
        }
        for (b, t) in grid.midpoints(k).enumerate() {
            let bin_lo = k as f64 + b as f64 * bin_width;
            let bin_hi = k as f64 + (b + 1) as f64 * bin_width;
            let w = ind.at_risk(t) * alpha.weight(ind, k, m, t);
            features.build(ind, t, &mut row);
            feats.extend_from_slice(&row);
            targets.push(rho_target(ind, k, bin_lo, bin_hi, beta_prefix)?);
            weights.push(w);
            if w > 0.0 {
                any_positive = true;
            }
        }
    }
    if !any_positive {
        return Ok(None);
    }
    let dataset = Dataset::new(feats, width, targets, weights)?;
    let predictor = learners::fit(spec, &dataset)?;
    Ok(Some(RhoFit {
        k,
        m,
        source: RhoSource::Fitted {
            predictor,
            features,
            bin_width,
        },
    }))
}

fn fit_rho_all(
    panel: &Panel,
    subset: Option<&[usize]>,
    m: usize,
    grid: &TimeGrid,
    alpha: &AlphaWeights,
    beta_prefix: &[f64],
    spec: &LearnerSpec,
) -> Result<RhoFits> {
    (0..=panel.horizon)
        .into_par_iter()
        .map(|k| {
            if (k as i64 - m as i64) < -(panel.baseline_len as i64) {
                return Ok(None);
            }
            match fit_rho(panel, subset, k, m, grid, alpha, beta_prefix, spec) {
                Err(Error::DegenerateDesign(_)) => Ok(None),
                other => other,
            }
        })
        .collect()
}

/// Pooled cross-fitted solve for the lag-`m` effect with externally supplied
/// per-fold nuisances. The ratio is formed from fold-summed numerators and
/// denominators, never from per-fold ratios.
pub fn robust_step(
    panel: &Panel,
    grid: &TimeGrid,
    plan: &FoldPlan,
    mu_by_fold: &[MuFits],
    rho_by_fold: &[RhoFits],
    alpha: &AlphaWeights,
    beta_prefix: &[f64],
    m: usize,
) -> Result<(f64, StepDiag)> {
    let mut pooled = StepSums {
        num: 0.0,
        den: 0.0,
        diag: StepDiag {
            min_weight: f64::INFINITY,
            max_weight: f64::NEG_INFINITY,
            ..StepDiag::default()
        },
    };
    for fold in 0..plan.v {
        let validation = plan.validation_indices(fold);
        let sums = accumulate_step(
            panel,
            Some(&validation),
            grid,
            &mu_by_fold[fold],
            alpha,
            m,
            beta_prefix,
            Some(&rho_by_fold[fold]),
            JumpKind::Events,
            DenKind::DeltaSquared,
        )?;
        pooled.num += sums.num;
        pooled.den += sums.den;
        pooled.diag.skipped_periods += sums.diag.skipped_periods;
        pooled.diag.skipped_jumps += sums.diag.skipped_jumps;
        pooled.diag.capped_weights += sums.diag.capped_weights;
        pooled.diag.min_weight = pooled.diag.min_weight.min(sums.diag.min_weight);
        pooled.diag.max_weight = pooled.diag.max_weight.max(sums.diag.max_weight);
    }
    pooled.diag.denominator = pooled.den;
    let value = solve_ratio(&pooled, panel.person_periods(), &format!("robust beta[{m}]"))?;
    Ok((value, pooled.diag))
}

/// Full cross-fitted robust fit: per lag, per fold, train both nuisances on
/// the complement and evaluate on the fold; solve the pooled ratio; move to
/// the next lag with the solved prefix.
#[allow(clippy::too_many_arguments)]
pub fn fit_robust(
    panel: &Panel,
    grid: &TimeGrid,
    v: usize,
    seed: u64,
    spec_mu: &LearnerSpec,
    spec_rho: &LearnerSpec,
    alpha: &AlphaWeights,
    m_lags: usize,
) -> Result<EffectEstimates> {
    let plan = make_folds(panel.n(), v, seed)?;
    let mut beta: Vec<f64> = Vec::with_capacity(m_lags + 1);
    let mut diagnostics = Vec::with_capacity(m_lags + 1);

    for m in 0..=m_lags {
        let per_fold: Vec<Result<(MuFits, RhoFits)>> = (0..v)
            .into_par_iter()
            .map(|fold| {
                let train = plan.training_indices(fold);
                let mu = fit_mu_all(
                    panel,
                    Some(&train),
                    m,
                    grid,
                    alpha,
                    spec_mu,
                    MuFlavor::Nonparametric,
                )
                .map_err(|e| wrap_fold_err(e, fold, m))?;
                let rho = fit_rho_all(panel, Some(&train), m, grid, alpha, &beta, spec_rho)
                    .map_err(|e| wrap_fold_err(e, fold, m))?;
                Ok((mu, rho))
            })
            .collect();

        let mut mu_by_fold = Vec::with_capacity(v);
        let mut rho_by_fold = Vec::with_capacity(v);
        for r in per_fold {
            let (mut mu, mut rho) = r?;
            // a period is usable only when both nuisances fitted
            for k in 0..mu.len() {
                if mu[k].is_none() || rho[k].is_none() {
                    mu[k] = None;
                    rho[k] = None;
                }
            }
            mu_by_fold.push(mu);
            rho_by_fold.push(rho);
        }
        let (value, diag) =
            robust_step(panel, grid, &plan, &mu_by_fold, &rho_by_fold, alpha, &beta, m)?;
        beta.push(value);
        diagnostics.push(diag);
    }

    Ok(EffectEstimates {
        beta,
        method: Method::Robust,
        alpha: alpha.alpha.clone(),
        se: None,
        ci: None,
        ci_level: None,
        diagnostics,
    })
}

fn wrap_fold_err(e: Error, fold: usize, m: usize) -> Error {
    match e {
        Error::FoldFit { .. } => e,
        other => Error::FoldFit {
            fold,
            k: usize::MAX,
            m,
            source: Box::new(other),
        },
    }
}
