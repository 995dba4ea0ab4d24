//! Replication-grade study simulator: AR-correlated covariates, an
//! exponential frailty shared by the recurrent and terminal processes, two
//! exposure scenarios, additive event rates with exact inverse-transform
//! sampling, and calibration of the confounding strength.
//!
//! Exposures and covariates are constant within periods, so every rate is
//! piecewise constant and all survival inversions are exact. Individuals
//! draw from independent RNG streams keyed by the master seed, so parallel
//! generation is reproducible.

use crate::error::{Error, Result};
use crate::panel::{Individual, Panel};
use crate::rngutil::stream_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Exposure mean linear in the covariates.
    Simple,
    /// Exposure mean nonlinear in the covariates.
    Complex,
}

impl Scenario {
    /// Mean of the raw (pre-normalization) exposure given covariates.
    pub fn mean(&self, l1: f64, l2: f64) -> f64 {
        match self {
            Scenario::Simple => l1 + 0.5 * l2,
            Scenario::Complex => 2.0 * l1 * l1 + 2.0 * l1 * (l2 - 1.0).abs(),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Scenario::Simple),
            "complex" => Ok(Scenario::Complex),
            other => Err(Error::InvalidConfig(format!("unknown scenario: {other}"))),
        }
    }
}

/// Full parameterization of the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Last period index; the study spans `[0, horizon]`.
    pub horizon: usize,
    /// Baseline periods before the study window.
    pub baseline_len: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Lag-one autocorrelation of both covariate series.
    pub ar: f64,
    pub frailty_mean: f64,
    pub scenario: Scenario,
    /// True lagged effects on the recurrent-event rate.
    pub beta_true: Vec<f64>,
    /// True lagged effects on the terminal-event rate.
    pub alpha_true: Vec<f64>,
    pub censor_scale: f64,
    /// Target ratio of baseline-rate variance to exposure-effect variance.
    pub var_ratio: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n: usize, scenario: Scenario, seed: u64) -> Self {
        Self {
            n,
            horizon: 30,
            baseline_len: 4,
            sigma1: 0.2,
            sigma2: 1.0,
            ar: 0.95,
            frailty_mean: 0.2,
            scenario,
            beta_true: vec![0.1, 0.05, 0.025, 0.0, 0.0],
            alpha_true: vec![0.02, 0.01],
            censor_scale: 0.2,
            var_ratio: 100.0,
            seed,
        }
    }

    pub fn tau(&self) -> f64 {
        self.horizon as f64
    }

    fn periods(&self) -> usize {
        self.baseline_len + self.horizon + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if self.beta_true.len() != self.baseline_len + 1 {
            return Err(Error::InvalidConfig(format!(
                "beta_true needs {} entries (baseline length + 1), has {}",
                self.baseline_len + 1,
                self.beta_true.len()
            )));
        }
        if self.alpha_true.len() > self.baseline_len + 1 {
            return Err(Error::InvalidConfig("alpha_true longer than lag window".into()));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::InvalidConfig("covariate scales must be positive".into()));
        }
        if !(self.ar.abs() < 1.0) {
            return Err(Error::InvalidConfig("ar must be in (-1, 1)".into()));
        }
        if self.frailty_mean < 0.0 || self.censor_scale < 0.0 || self.var_ratio <= 0.0 {
            return Err(Error::InvalidConfig("negative scale parameter".into()));
        }
        Ok(())
    }
}

/// Study-level constants realized during generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMeta {
    pub config: SimConfig,
    /// Calibrated baseline-rate multiplier.
    pub c: f64,
    /// Global min-max normalization constants for exposures.
    pub norm_min: f64,
    pub norm_max: f64,
}

/// One individual's stationary AR covariate series over all periods,
/// `(series one, series two)`.
pub fn sim_covariates(cfg: &SimConfig, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    fn series(periods: usize, sigma: f64, ar: f64, rng: &mut impl Rng) -> Vec<f64> {
        let innov = (1.0 - ar * ar).sqrt();
        let mut out = Vec::with_capacity(periods);
        let mut prev: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
        out.push(prev);
        for _ in 1..periods {
            let eps: f64 = rng.sample(StandardNormal);
            prev = ar * prev + sigma * innov * eps;
            out.push(prev);
        }
        out
    }
    let periods = cfg.periods();
    let l1 = series(periods, cfg.sigma1, cfg.ar, rng);
    let l2 = series(periods, cfg.sigma2, cfg.ar, rng);
    (l1, l2)
}

/// Raw (pre-normalization) exposures: scenario mean plus unit Gaussian
/// noise, one per period.
pub fn sim_exposures(cfg: &SimConfig, l1: &[f64], l2: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    l1.iter()
        .zip(l2)
        .map(|(&a, &b)| cfg.scenario.mean(a, b) + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Baseline-rate multiplier matching the target variance ratio over a pilot
/// of person-period terms.
pub fn calibrate_c(var_ratio: f64, exposure_terms: &[f64], eta_terms: &[f64]) -> Result<f64> {
    let sd = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    if exposure_terms.is_empty() || eta_terms.is_empty() {
        return Err(Error::EmptyData);
    }
    let sd_eta = sd(eta_terms);
    if sd_eta == 0.0 {
        return Err(Error::DegenerateDesign(
            "zero variance in the baseline-rate pilot".into(),
        ));
    }
    Ok(var_ratio.sqrt() * sd(exposure_terms) / sd_eta)
}

/// Solve `integral of rate from start to t = -ln(u)` for `t`, where the rate
/// is constant within each unit period (`rates[k]` on `[k, k+1)`). Exact;
/// returns `None` when the horizon `rates.len()` is reached first.
pub fn invert_survival(rates: &[f64], start: f64, u: f64) -> Option<f64> {
    debug_assert!(u > 0.0 && u <= 1.0);
    let mut target = -u.ln();
    if target == 0.0 {
        return Some(start);
    }
    let mut t = start;
    let mut k = start.floor() as usize;
    while k < rates.len() {
        let seg_end = (k + 1) as f64;
        let rate = rates[k];
        let mass = rate * (seg_end - t);
        if mass >= target && rate > 0.0 {
            return Some(t + target / rate);
        }
        target -= mass;
        t = seg_end;
        k += 1;
    }
    None
}

/// Recurrent event times on `[0, horizon]` from a piecewise-constant rate,
/// by repeated inversion of the conditional survivor function.
pub fn sim_event_times(rates: &[f64], horizon: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut events = Vec::new();
    let mut t = 0.0;
    while t < horizon {
        let u = draw_survivor_u(rng);
        match invert_survival(rates, t, u) {
            Some(next) if next <= horizon && next > t => {
                events.push(next);
                t = next;
            }
            _ => break,
        }
    }
    events
}

/// Survivor-function draw in (0, 1); skips the measure-zero endpoints.
fn draw_survivor_u(rng: &mut impl Rng) -> f64 {
    loop {
        let x: f64 = rng.random();
        let u = 1.0 - x;
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

struct Trajectory {
    l1: Vec<f64>,
    l2: Vec<f64>,
    frailty: f64,
    raw_exposures: Vec<f64>,
}

fn phase_rng(cfg: &SimConfig, phase: u64, i: usize) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream_seed(cfg.seed, (phase << 32) | i as u64))
}

/// Generate a full study: covariates, frailty, exposures (normalized
/// study-wide to `[0, 1]`), the calibrated baseline rate, recurrent events,
/// terminal and censoring times. The returned panel always validates.
pub fn simulate_study(cfg: &SimConfig) -> Result<(Panel, StudyMeta)> {
    cfg.validate()?;
    use rayon::prelude::*;

    let trajectories: Vec<Trajectory> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = phase_rng(cfg, 1, i);
            let (l1, l2) = sim_covariates(cfg, &mut rng);
            let u: f64 = rng.random();
            let frailty = if cfg.frailty_mean > 0.0 {
                -cfg.frailty_mean * (1.0 - u).ln()
            } else {
                0.0
            };
            let raw_exposures = sim_exposures(cfg, &l1, &l2, &mut rng);
            Trajectory {
                l1,
                l2,
                frailty,
                raw_exposures,
            }
        })
        .collect();

    let mut norm_min = f64::INFINITY;
    let mut norm_max = f64::NEG_INFINITY;
    for t in &trajectories {
        for &a in &t.raw_exposures {
            norm_min = norm_min.min(a);
            norm_max = norm_max.max(a);
        }
    }
    if !(norm_max > norm_min) {
        return Err(Error::DegenerateDesign("constant raw exposures".into()));
    }
    let norm = |a: f64| (a - norm_min) / (norm_max - norm_min);

    // calibration pilot over all study person-periods, before any event
    // generation
    let m = cfg.baseline_len;
    let mut exposure_terms = Vec::with_capacity(cfg.n * cfg.horizon);
    let mut eta_terms = Vec::with_capacity(cfg.n * cfg.horizon);
    for t in &trajectories {
        for k in 0..cfg.horizon {
            let idx = k + m; // series index of period k
            let expo: f64 = cfg
                .beta_true
                .iter()
                .enumerate()
                .map(|(lag, b)| b * norm(t.raw_exposures[idx - lag]))
                .sum();
            exposure_terms.push(expo);
            eta_terms.push(t.frailty * (t.l1[idx] + t.l1[idx].powi(2) + t.l2[idx] - 1.0).exp());
        }
    }
    let c = if eta_terms.iter().all(|&e| e == 0.0) {
        0.0
    } else {
        calibrate_c(cfg.var_ratio, &exposure_terms, &eta_terms)?
    };

    let individuals: Vec<Individual> = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, tr)| {
            let mut rng = phase_rng(cfg, 2, i);
            let tau = cfg.tau();
            let periods = cfg.horizon; // full unit periods in the study

            let mut death_rates = Vec::with_capacity(periods);
            let mut censor_rates = Vec::with_capacity(periods);
            let mut event_rates = Vec::with_capacity(periods);
            for k in 0..periods {
                let idx = k + m;
                let shared = (tr.l1[idx] + tr.l2[idx] - 1.0).exp();
                let death_expo: f64 = cfg
                    .alpha_true
                    .iter()
                    .enumerate()
                    .map(|(lag, a)| a * norm(tr.raw_exposures[idx - lag]))
                    .sum();
                death_rates.push((death_expo + tr.frailty * shared).max(0.0));
                censor_rates.push(cfg.censor_scale * shared);
                let event_expo: f64 = cfg
                    .beta_true
                    .iter()
                    .enumerate()
                    .map(|(lag, b)| b * norm(tr.raw_exposures[idx - lag]))
                    .sum();
                let eta =
                    tr.frailty * (tr.l1[idx] + tr.l1[idx].powi(2) + tr.l2[idx] - 1.0).exp();
                event_rates.push((event_expo + c * eta).max(0.0));
            }

            let death = invert_survival(&death_rates, 0.0, draw_survivor_u(&mut rng));
            let censor = invert_survival(&censor_rates, 0.0, draw_survivor_u(&mut rng));
            let d = death.unwrap_or(f64::INFINITY);
            let cns = censor.unwrap_or(f64::INFINITY);
            let x_time = d.min(cns).min(tau);
            let death_observed = d <= cns && d <= tau;

            let events: Vec<f64> = sim_event_times(&event_rates, x_time, &mut rng)
                .into_iter()
                .filter(|&t| t > 0.0 && t <= x_time)
                .collect();

            let exposures: Vec<f64> = tr.raw_exposures.iter().map(|&a| norm(a)).collect();
            let cov_rows = m + (x_time.floor() as usize).min(cfg.horizon) + 1;
            let mut covariates = Vec::with_capacity(cov_rows * 3);
            for r in 0..cov_rows {
                covariates.push(tr.l1[r]);
                covariates.push(tr.l2[r]);
                covariates.push(tr.frailty);
            }

            Individual::new(
                i as u64,
                m,
                exposures,
                covariates,
                3,
                events,
                x_time,
                death_observed,
            )
        })
        .collect();

    let panel = Panel::new(individuals, m, cfg.tau(), 3);
    debug_assert!(panel.validate().passed(), "{}", panel.validate());
    Ok((
        panel,
        StudyMeta {
            config: cfg.clone(),
            c,
            norm_min,
            norm_max,
        },
    ))
}

impl StudyMeta {
    fn width(&self) -> f64 {
        self.norm_max - self.norm_min
    }

    /// Scenario mean of the raw exposure for a period, read off the stored
    /// covariates.
    fn raw_mean(&self, ind: &Individual, period: i64) -> f64 {
        let cov = ind
            .covariates_at(period)
            .expect("covariates recorded for the period");
        self.config.scenario.mean(cov[0], cov[1])
    }

    /// True exposure-model mean: the scenario mean tilted by terminal-event
    /// selection up to `t`, on the normalized scale.
    ///
    /// Conditioning on counterfactual survival to `t` exponentially tilts
    /// the Gaussian raw exposure by the hazard mass it contributes before
    /// `t`, which shifts its mean by exactly that mass over the
    /// normalization width.
    pub fn oracle_mu(&self, ind: &Individual, k: usize, m: usize, t: f64) -> f64 {
        let target = k as i64 - m as i64;
        let w = self.width();
        let mut gamma = 0.0;
        for (j, a) in self.config.alpha_true.iter().enumerate() {
            let lo = (target + j as i64) as f64;
            let hi = lo + 1.0;
            gamma += a * (t.min(hi) - lo.max(0.0)).max(0.0);
        }
        (self.raw_mean(ind, target) - gamma / w - self.norm_min) / w
    }

    /// A conditioning-measurable version of the true blipped-down outcome
    /// rate: delayed exposure effects from known lags, the baseline rate
    /// evaluated at the conditioning frontier, and the lag-`m` effect at the
    /// true exposure-model mean.
    pub fn oracle_rho(&self, ind: &Individual, k: usize, m: usize, t: f64) -> f64 {
        let target = k as i64 - m as i64;
        let cov = ind
            .covariates_at(target)
            .expect("covariates recorded for the period");
        let (l1, l2, q) = (cov[0], cov[1], cov[2]);
        let mut rate = self.c * q * (l1 + l1 * l1 + l2 - 1.0).exp();
        for (j, b) in self.config.beta_true.iter().enumerate() {
            if j > m {
                if let Some(a) = ind.exposure(k as i64 - j as i64) {
                    rate += a * b;
                }
            }
        }
        rate += self.oracle_mu(ind, k, m, t) * self.config.beta_true[m];
        rate
    }
}
