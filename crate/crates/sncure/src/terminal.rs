//! Terminal-event exposure effects and the risk-set adjusting weights they
//! induce.
//!
//! The lag-`m` terminal effect solves the same estimating equation as the
//! recurrent-event effects, with the death counting process supplying the
//! single jump term. Each solve is a closed-form ratio; the sequence is
//! estimated lag by lag because the lag-`m` weight needs all earlier
//! effects.

use crate::error::Result;
use crate::estimating::{accumulate_step, solve_ratio, DenKind, JumpKind, StepDiag};
use crate::exposure::{fit_mu_all, MuFits, MuFlavor};
use crate::learners::LearnerSpec;
use crate::panel::{Individual, Panel, TimeGrid};
use serde::{Deserialize, Serialize};

/// Terminal-event effect parameters and the induced weight function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaWeights {
    /// Effects of exposure on the terminal-event rate, lag 0 upward.
    pub alpha: Vec<f64>,
    /// Optional clamp of weights into `[1/cap, cap]`.
    pub weight_cap: Option<f64>,
}

impl AlphaWeights {
    pub fn from_values(alpha: Vec<f64>, weight_cap: Option<f64>) -> Self {
        Self { alpha, weight_cap }
    }

    /// Identity weights: enough zero entries for `m_lags` lags.
    pub fn zeros(m_lags: usize) -> Self {
        Self::from_values(vec![0.0; m_lags + 1], None)
    }

    /// Risk-set adjusting weight for lag `m` at `t` in `[k, k+1)`.
    ///
    /// Lag 0 is identically 1. For `m >= 1` the log-weight accumulates one
    /// term per more-recent exposure `A_{k-j}`, `j < m`: the completed
    /// effects `alpha_0 + .. + alpha_{j-1}` plus the in-progress effect
    /// `alpha_j * (t - k)`.
    pub fn weight(&self, ind: &Individual, k: usize, m: usize, t: f64) -> f64 {
        self.weight_flagged(ind, k, m, t).0
    }

    /// Same as [`Self::weight`], also reporting whether the cap clamped.
    pub fn weight_flagged(&self, ind: &Individual, k: usize, m: usize, t: f64) -> (f64, bool) {
        if m == 0 {
            return (1.0, false);
        }
        debug_assert!(m <= self.alpha.len());
        let offset = t - k as f64;
        let mut log_w = 0.0;
        let mut prefix = 0.0; // alpha_0 + .. + alpha_{j-1}
        for j in 0..m {
            let a = ind
                .exposure(k as i64 - j as i64)
                .expect("weight exposures within recorded history");
            log_w += a * (prefix + self.alpha[j] * offset);
            prefix += self.alpha[j];
        }
        let w = log_w.exp();
        match self.weight_cap {
            Some(cap) => {
                let clamped = w.clamp(1.0 / cap, cap);
                (clamped, clamped != w)
            }
            None => (w, false),
        }
    }
}

/// One closed-form solve for the lag-`m` terminal effect, given that lag's
/// exposure models and the already-estimated earlier effects.
pub fn alpha_step(
    panel: &Panel,
    grid: &TimeGrid,
    mu_m: &MuFits,
    alpha_prefix: &AlphaWeights,
    m: usize,
) -> Result<(f64, StepDiag)> {
    let sums = accumulate_step(
        panel,
        None,
        grid,
        mu_m,
        alpha_prefix,
        m,
        &alpha_prefix.alpha[..m],
        None,
        JumpKind::Death,
        DenKind::DeltaTimesExposure,
    )?;
    let value = solve_ratio(&sums, panel.person_periods(), &format!("alpha[{m}]"))?;
    Ok((value, sums.diag))
}

/// Sequentially estimate the terminal effects for lags `0..=m_lags`,
/// interleaving the parametric exposure-model fits each lag requires. Also
/// returns those fits so downstream estimators can reuse them.
pub fn estimate_alpha(
    panel: &Panel,
    grid: &TimeGrid,
    m_lags: usize,
    weight_cap: Option<f64>,
) -> Result<(AlphaWeights, Vec<MuFits>, Vec<StepDiag>)> {
    let mut alpha = AlphaWeights::from_values(Vec::with_capacity(m_lags + 1), weight_cap);
    let mut mu_tables = Vec::with_capacity(m_lags + 1);
    let mut diags = Vec::with_capacity(m_lags + 1);
    for m in 0..=m_lags {
        let mu_m = fit_mu_all(
            panel,
            None,
            m,
            grid,
            &alpha,
            &LearnerSpec::Linear,
            MuFlavor::Parametric,
        )?;
        let (value, diag) = alpha_step(panel, grid, &mu_m, &alpha, m)?;
        alpha.alpha.push(value);
        mu_tables.push(mu_m);
        diags.push(diag);
    }
    Ok((alpha, mu_tables, diags))
}
