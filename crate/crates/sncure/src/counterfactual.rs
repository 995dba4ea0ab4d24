//! Expected events averted under exposure-cap interventions. The at-risk
//! process stays the observed one: the intervention changes exposures, not
//! lifetimes, so integration runs only over each individual's observed
//! follow-up.

use crate::bootstrap::{normal_quantile, BootstrapResult};
use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::parametric::EffectEstimates;
use serde::{Deserialize, Serialize};

/// An intervention capping all exposures at `cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapScenario {
    pub cap: f64,
    pub label: String,
}

impl CapScenario {
    pub fn new(cap: f64, label: impl Into<String>) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::InvalidConfig("cap must be positive and finite".into()));
        }
        Ok(Self {
            cap,
            label: label.into(),
        })
    }
}

/// Cumulative averted events by period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvertedCurve {
    pub periods: Vec<usize>,
    pub cumulative: Vec<f64>,
    pub total: f64,
}

/// Total and per-period cumulative averted events for a bare coefficient
/// vector. The within-period integrand is constant, so integration is exact:
/// each period contributes its at-risk overlap with `[k, min(k+1, t_end)]`.
pub fn averted_for_beta(
    panel: &Panel,
    beta: &[f64],
    cap: f64,
    t_end: f64,
) -> (f64, Vec<f64>) {
    let k_max = (t_end.floor() as usize).min(panel.horizon);
    let mut per_period = vec![0.0; k_max + 1];
    for ind in &panel.individuals {
        for (k, slot) in per_period.iter_mut().enumerate() {
            let len = (ind.x_time.min(t_end).min(k as f64 + 1.0) - k as f64).max(0.0);
            if len == 0.0 {
                continue;
            }
            let mut rate = 0.0;
            for (m, b) in beta.iter().enumerate() {
                if let Some(a) = ind.exposure(k as i64 - m as i64) {
                    rate += (a - a.min(cap)) * b;
                }
            }
            *slot += rate * len;
        }
    }
    let mut cumulative = per_period;
    let mut acc = 0.0;
    for v in cumulative.iter_mut() {
        acc += *v;
        *v = acc;
    }
    (acc, cumulative)
}

/// Expected events averted by capping exposures at `scenario.cap`, up to
/// `t_end`.
pub fn events_averted(
    panel: &Panel,
    estimates: &EffectEstimates,
    scenario: &CapScenario,
    t_end: f64,
) -> Result<(f64, AvertedCurve)> {
    if !(t_end > 0.0 && t_end <= panel.tau) {
        return Err(Error::InvalidConfig(format!(
            "evaluation end {t_end} outside (0, tau]"
        )));
    }
    let (total, cumulative) = averted_for_beta(panel, &estimates.beta, scenario.cap, t_end);
    let periods = (0..cumulative.len()).collect();
    Ok((
        total,
        AvertedCurve {
            periods,
            cumulative,
            total,
        },
    ))
}

/// Normal-approximation interval for the averted total: the estimate is
/// recomputed on the original panel under each bootstrap replicate's
/// coefficients, and the interval uses the spread of those totals around
/// the point value.
pub fn averted_ci(
    panel: &Panel,
    boot: &BootstrapResult,
    point: &EffectEstimates,
    scenario: &CapScenario,
    t_end: f64,
) -> Result<(f64, f64)> {
    let (point_total, _) = averted_for_beta(panel, &point.beta, scenario.cap, t_end);
    let totals: Vec<f64> = boot
        .replicates
        .iter()
        .map(|b| averted_for_beta(panel, b, scenario.cap, t_end).0)
        .collect();
    if totals.is_empty() {
        return Err(Error::EmptyData);
    }
    let r = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / r;
    let sd = (totals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r).sqrt();
    let z = normal_quantile(0.5 * (1.0 + boot.ci_level));
    Ok((point_total - z * sd, point_total + z * sd))
}

/// Per-period cumulative curve with pointwise normal intervals from the
/// bootstrap replicates.
pub fn averted_curve_ci(
    panel: &Panel,
    boot: &BootstrapResult,
    point: &EffectEstimates,
    scenario: &CapScenario,
    t_end: f64,
) -> Result<Vec<(usize, f64, f64, f64)>> {
    let (_, point_curve) = averted_for_beta(panel, &point.beta, scenario.cap, t_end);
    let replicate_curves: Vec<Vec<f64>> = boot
        .replicates
        .iter()
        .map(|b| averted_for_beta(panel, b, scenario.cap, t_end).1)
        .collect();
    let z = normal_quantile(0.5 * (1.0 + boot.ci_level));
    let r = replicate_curves.len() as f64;
    let mut out = Vec::with_capacity(point_curve.len());
    for (k, &v) in point_curve.iter().enumerate() {
        let mean = replicate_curves.iter().map(|c| c[k]).sum::<f64>() / r;
        let sd =
            (replicate_curves.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>() / r).sqrt();
        out.push((k, v, v - z * sd, v + z * sd));
    }
    Ok(out)
}
