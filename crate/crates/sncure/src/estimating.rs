//! Shared machinery for the closed-form estimating-equation solves. Every
//! parameter (terminal-event effects, lagged exposure effects, robust lagged
//! effects) solves a linear equation of the same shape: a sum of point-mass
//! jump terms minus a quadrature term, divided by a quadrature denominator.
//!
//! Point masses (recurrent events, the death jump) are evaluated exactly at
//! their times; `dt` integrals use midpoint quadrature on the time-grid
//! bins. Per-individual contributions are accumulated in id order so results
//! are invariant to the storage order of the panel.

use crate::error::{Error, Result};
use crate::exposure::MuFits;
use crate::panel::{Panel, TimeGrid};
use crate::robust::RhoFits;
use crate::terminal::AlphaWeights;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which counting process supplies the jump terms.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum JumpKind {
    /// Recurrent events in `[k, k+1)`.
    Events,
    /// The single death time when observed in `[k, k+1)`.
    Death,
}

/// Integrand multiplying the unknown in the denominator.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum DenKind {
    /// `Delta * A_{k-m}` — exposure-model estimating equations.
    DeltaTimesExposure,
    /// `Delta^2` — the robust equation centers the unknown on `Delta`.
    DeltaSquared,
}

/// Per-step numeric diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiag {
    pub denominator: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    /// Periods without a usable exposure model (lag underflow or empty risk
    /// set).
    pub skipped_periods: usize,
    /// Jump terms dropped because their period had no exposure model.
    pub skipped_jumps: usize,
    /// Weight evaluations clamped by the configured cap.
    pub capped_weights: usize,
}

pub(crate) struct StepSums {
    pub num: f64,
    pub den: f64,
    pub diag: StepDiag,
}

/// Accumulate numerator and denominator of one estimating-equation step over
/// the given individuals (all of them when `subset` is `None`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_step(
    panel: &Panel,
    subset: Option<&[usize]>,
    grid: &TimeGrid,
    mu_m: &MuFits,
    alpha: &AlphaWeights,
    m: usize,
    prior_coefs: &[f64],
    rho: Option<&RhoFits>,
    jump_kind: JumpKind,
    den_kind: DenKind,
) -> Result<StepSums> {
    debug_assert_eq!(prior_coefs.len(), m);
    let mut indices: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..panel.n()).collect(),
    };
    indices.sort_by_key(|&i| panel.individuals[i].id);

    let width = grid.bin_width();
    let baseline = panel.baseline_len as i64;

    // periods skipped for everyone alike
    let mut skipped_periods = 0usize;
    for k in 0..=panel.horizon {
        if (k as i64 - m as i64) < -baseline || mu_m[k].is_none() {
            skipped_periods += 1;
        }
    }

    struct PerInd {
        num: f64,
        den: f64,
        min_w: f64,
        max_w: f64,
        skipped_jumps: usize,
        capped: usize,
    }

    let contributions: Vec<Result<PerInd>> = indices
        .par_iter()
        .map(|&i| {
            let ind = &panel.individuals[i];
            let mut acc = PerInd {
                num: 0.0,
                den: 0.0,
                min_w: f64::INFINITY,
                max_w: f64::NEG_INFINITY,
                skipped_jumps: 0,
                capped: 0,
            };
            for k in 0..=panel.horizon {
                if (k as i64 - m as i64) < -baseline {
                    continue;
                }
                if ind.at_risk(k as f64) == 0.0 {
                    continue;
                }
                let Some(mu) = &mu_m[k] else {
                    // unusable period: drop any jumps falling inside it
                    let lost = match jump_kind {
                        JumpKind::Events => ind.events_in(k as f64, k as f64 + 1.0).0,
                        JumpKind::Death => usize::from(
                            ind.death_observed
                                && ind.x_time >= k as f64
                                && ind.x_time < k as f64 + 1.0,
                        ),
                    };
                    acc.skipped_jumps += lost;
                    continue;
                };
                let a_lag = ind
                    .exposure(k as i64 - m as i64)
                    .ok_or(Error::MissingHistory { k, m })?;
                let blip_rate: f64 = prior_coefs
                    .iter()
                    .enumerate()
                    .map(|(j, b)| {
                        ind.exposure(k as i64 - j as i64)
                            .map(|a| a * b)
                            .ok_or(Error::MissingHistory { k, m: j })
                    })
                    .sum::<Result<f64>>()?;

                // midpoint quadrature over at-risk bins
                for t in grid.midpoints(k) {
                    if ind.at_risk(t) == 0.0 {
                        break; // X < t and bins increase
                    }
                    let (w, capped) = alpha.weight_flagged(ind, k, m, t);
                    acc.capped += usize::from(capped);
                    acc.min_w = acc.min_w.min(w);
                    acc.max_w = acc.max_w.max(w);
                    let delta = a_lag - mu.eval(ind, t)?;
                    let mut g = blip_rate;
                    if let Some(rho_fits) = rho {
                        let rf = rho_fits[k].as_ref().ok_or_else(|| {
                            Error::DegenerateDesign(format!(
                                "missing outcome-rate fit at k={k}, m={m}"
                            ))
                        })?;
                        g += rf.eval_rate(ind, t)?;
                    }
                    acc.num -= w * delta * g * width;
                    let den_f = match den_kind {
                        DenKind::DeltaTimesExposure => delta * a_lag,
                        DenKind::DeltaSquared => delta * delta,
                    };
                    acc.den += w * den_f * width;
                }

                // exact point-mass terms
                match jump_kind {
                    JumpKind::Events => {
                        let (_, times) = ind.events_in(k as f64, k as f64 + 1.0);
                        for &t in times {
                            let (w, capped) = alpha.weight_flagged(ind, k, m, t);
                            acc.capped += usize::from(capped);
                            let delta = a_lag - mu.eval(ind, t)?;
                            acc.num += w * delta;
                        }
                    }
                    JumpKind::Death => {
                        if ind.death_observed
                            && ind.x_time >= k as f64
                            && ind.x_time < k as f64 + 1.0
                        {
                            let t = ind.x_time;
                            let (w, capped) = alpha.weight_flagged(ind, k, m, t);
                            acc.capped += usize::from(capped);
                            let delta = a_lag - mu.eval(ind, t)?;
                            acc.num += w * delta;
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut num = 0.0;
    let mut den = 0.0;
    let mut diag = StepDiag {
        skipped_periods,
        min_weight: f64::INFINITY,
        max_weight: f64::NEG_INFINITY,
        ..StepDiag::default()
    };
    for c in contributions {
        let c = c?;
        num += c.num;
        den += c.den;
        diag.min_weight = diag.min_weight.min(c.min_w);
        diag.max_weight = diag.max_weight.max(c.max_w);
        diag.skipped_jumps += c.skipped_jumps;
        diag.capped_weights += c.capped;
    }
    if !diag.min_weight.is_finite() {
        diag.min_weight = 1.0;
        diag.max_weight = 1.0;
    }
    diag.denominator = den;

    if !(num.is_finite() && den.is_finite()) {
        return Err(Error::NonFinite("estimating equation sums".into()));
    }
    Ok(StepSums { num, den, diag })
}

/// Closed-form ratio with the degeneracy guard scaled by cohort size.
pub(crate) fn solve_ratio(sums: &StepSums, person_periods: usize, context: &str) -> Result<f64> {
    let threshold = 1e-10 * person_periods as f64;
    if sums.den.abs() < threshold {
        return Err(Error::DegenerateDenominator {
            context: context.to_string(),
            value: sums.den,
            threshold,
        });
    }
    let ratio = sums.num / sums.den;
    if !ratio.is_finite() {
        return Err(Error::NonFinite(context.to_string()));
    }
    Ok(ratio)
}
