//! Longitudinal recurrent-event panel data.
//!
//! A [`Panel`] holds one [`Individual`] per study subject: an exposure series
//! over periods `-M..=K` (exposure is external and recorded regardless of
//! death or censoring), a covariate row per period up to the terminal time,
//! the sorted recurrent event times, and the follow-up end `X` with a death
//! indicator. Periods are unit-length and left-closed: an event at an integer
//! time `k` belongs to period `k`.

use serde::{Deserialize, Serialize};
use std::fmt;

/// One subject's observed trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    /// Exposure values for periods `-M..=K`, stored with offset `M`.
    exposures: Vec<f64>,
    /// Covariate rows for periods `-M..=floor(x_time)`, row-major, width `p`.
    covariates: Vec<f64>,
    cov_width: usize,
    /// Recurrent event times, strictly increasing, all in `(0, x_time]`.
    event_times: Vec<f64>,
    /// End of follow-up: `min(death, censoring, tau)`.
    pub x_time: f64,
    /// True when follow-up ended in an observed death.
    pub death_observed: bool,
    baseline_len: usize,
}

impl Individual {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u64,
        baseline_len: usize,
        exposures: Vec<f64>,
        covariates: Vec<f64>,
        cov_width: usize,
        event_times: Vec<f64>,
        x_time: f64,
        death_observed: bool,
    ) -> Self {
        Self {
            id,
            exposures,
            covariates,
            cov_width,
            event_times,
            x_time,
            death_observed,
            baseline_len,
        }
    }

    pub fn baseline_len(&self) -> usize {
        self.baseline_len
    }

    pub fn cov_width(&self) -> usize {
        self.cov_width
    }

    /// Exposure during period `k`, for `k` in `-M..=K`.
    pub fn exposure(&self, k: i64) -> Option<f64> {
        let idx = k + self.baseline_len as i64;
        if idx < 0 {
            return None;
        }
        self.exposures.get(idx as usize).copied()
    }

    /// Covariate row for period `k`; present only while under follow-up
    /// (`k <= floor(x_time)`).
    pub fn covariates_at(&self, k: i64) -> Option<&[f64]> {
        let idx = k + self.baseline_len as i64;
        if idx < 0 || self.cov_width == 0 {
            return None;
        }
        let start = idx as usize * self.cov_width;
        let end = start + self.cov_width;
        if end > self.covariates.len() {
            return None;
        }
        Some(&self.covariates[start..end])
    }

    pub fn exposure_series(&self) -> &[f64] {
        &self.exposures
    }

    pub fn covariate_rows(&self) -> usize {
        if self.cov_width == 0 {
            0
        } else {
            self.covariates.len() / self.cov_width
        }
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    /// Left-continuous at-risk indicator `I(X >= t)`.
    pub fn at_risk(&self, t: f64) -> f64 {
        if self.x_time >= t {
            1.0
        } else {
            0.0
        }
    }

    /// Count and slice of event times in the half-open interval `[a, b)`.
    pub fn events_in(&self, a: f64, b: f64) -> (usize, &[f64]) {
        debug_assert!(a < b && a >= 0.0);
        let lo = self.event_times.partition_point(|&t| t < a);
        let hi = self.event_times.partition_point(|&t| t < b);
        (hi - lo, &self.event_times[lo..hi])
    }
}

/// A cohort of individuals observed over a common study window `[0, tau]`
/// after a shared baseline of `M` periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub individuals: Vec<Individual>,
    /// Baseline length `M` (periods `-M..0` precede the study window).
    pub baseline_len: usize,
    /// Last period index `K = floor(tau)`.
    pub horizon: usize,
    pub tau: f64,
    /// Common covariate row width `p`.
    pub cov_width: usize,
}

impl Panel {
    pub fn new(
        individuals: Vec<Individual>,
        baseline_len: usize,
        tau: f64,
        cov_width: usize,
    ) -> Self {
        Self {
            individuals,
            baseline_len,
            horizon: tau.floor() as usize,
            tau,
            cov_width,
        }
    }

    pub fn n(&self) -> usize {
        self.individuals.len()
    }

    /// Total number of at-risk person-periods, used to scale degeneracy
    /// thresholds.
    pub fn person_periods(&self) -> usize {
        self.individuals
            .iter()
            .map(|ind| {
                (0..=self.horizon)
                    .filter(|&k| ind.x_time >= k as f64)
                    .count()
            })
            .sum()
    }

    /// Check every structural invariant; returns a report rather than failing
    /// on the first violation.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let expected_exposures = self.baseline_len + self.horizon + 1;
        let mut seen_ids = std::collections::HashSet::new();

        for ind in &self.individuals {
            let id = ind.id;
            if !seen_ids.insert(id) {
                violations.push(Violation::DuplicateId { id });
            }
            if ind.baseline_len != self.baseline_len {
                violations.push(Violation::BaselineMismatch { id });
            }
            if !(ind.x_time > 0.0 && ind.x_time <= self.tau) {
                violations.push(Violation::XOutOfRange { id, x: ind.x_time });
            }
            if ind.exposures.len() != expected_exposures {
                violations.push(Violation::ExposureSeriesIncomplete {
                    id,
                    have: ind.exposures.len(),
                    need: expected_exposures,
                });
            }
            if ind.exposures.iter().any(|a| !a.is_finite()) {
                violations.push(Violation::NonFiniteExposure { id });
            }
            if ind.cov_width != self.cov_width {
                violations.push(Violation::CovariateWidthMismatch {
                    id,
                    have: ind.cov_width,
                    need: self.cov_width,
                });
            } else if self.cov_width > 0 {
                let expected_rows =
                    (self.baseline_len as i64 + (ind.x_time.floor() as i64).min(self.horizon as i64) + 1)
                        .max(0) as usize;
                let rows = ind.covariate_rows();
                if rows < expected_rows {
                    violations.push(Violation::CovariateSeriesIncomplete {
                        id,
                        have: rows,
                        need: expected_rows,
                    });
                } else if rows > expected_rows {
                    violations.push(Violation::CovariatePastX { id });
                }
            }
            let mut prev = 0.0;
            for &t in &ind.event_times {
                if t <= prev {
                    violations.push(Violation::EventsUnsorted { id });
                    break;
                }
                prev = t;
            }
            if let Some(&last) = ind.event_times.last() {
                if last > ind.x_time {
                    violations.push(Violation::EventAfterX {
                        id,
                        t: last,
                        x: ind.x_time,
                    });
                }
            }
            if ind.event_times.first().is_some_and(|&t| t <= 0.0) {
                violations.push(Violation::EventBeforeStart { id });
            }
        }

        ValidationReport { violations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    DuplicateId { id: u64 },
    BaselineMismatch { id: u64 },
    XOutOfRange { id: u64, x: f64 },
    ExposureSeriesIncomplete { id: u64, have: usize, need: usize },
    NonFiniteExposure { id: u64 },
    CovariateWidthMismatch { id: u64, have: usize, need: usize },
    CovariateSeriesIncomplete { id: u64, have: usize, need: usize },
    CovariatePastX { id: u64 },
    EventsUnsorted { id: u64 },
    EventAfterX { id: u64, t: f64, x: f64 },
    EventBeforeStart { id: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "individual {id}: duplicate id"),
            Violation::BaselineMismatch { id } => {
                write!(f, "individual {id}: baseline length differs from panel")
            }
            Violation::XOutOfRange { id, x } => {
                write!(f, "individual {id}: follow-up end {x} outside (0, tau]")
            }
            Violation::ExposureSeriesIncomplete { id, have, need } => write!(
                f,
                "individual {id}: exposure series incomplete ({have} of {need} periods)"
            ),
            Violation::NonFiniteExposure { id } => {
                write!(f, "individual {id}: non-finite exposure")
            }
            Violation::CovariateWidthMismatch { id, have, need } => write!(
                f,
                "individual {id}: covariate width {have}, panel expects {need}"
            ),
            Violation::CovariateSeriesIncomplete { id, have, need } => write!(
                f,
                "individual {id}: covariate series incomplete ({have} of {need} rows)"
            ),
            Violation::CovariatePastX { id } => {
                write!(f, "individual {id}: covariate rows past follow-up end")
            }
            Violation::EventsUnsorted { id } => {
                write!(f, "individual {id}: event times not strictly increasing")
            }
            Violation::EventAfterX { id, t, x } => {
                write!(f, "individual {id}: event at {t} after follow-up end {x}")
            }
            Violation::EventBeforeStart { id } => {
                write!(f, "individual {id}: event at or before t=0")
            }
        }
    }
}

/// Outcome of [`Panel::validate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

/// Discretization of each period `[k, k+1)` into equal bins; nuisance fits
/// and quadrature both run on the bin midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    bins_per_period: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { bins_per_period: 5 }
    }
}

impl TimeGrid {
    pub fn new(bins_per_period: usize) -> Self {
        assert!(bins_per_period >= 1, "grid needs at least one bin");
        Self { bins_per_period }
    }

    pub fn bins_per_period(&self) -> usize {
        self.bins_per_period
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.bins_per_period as f64
    }

    /// Midpoints of the bins covering `[k, k+1)`, strictly increasing.
    pub fn midpoints(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        let w = self.bin_width();
        (0..self.bins_per_period).map(move |b| k as f64 + (b as f64 + 0.5) * w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_individual(id: u64, x: f64, events: Vec<f64>) -> Individual {
        // M=2, K=30: exposures -2..=30 (33 values), covariates -2..=floor(x), p=1
        let rows = (2 + x.floor() as usize + 1).min(33);
        Individual::new(id, 2, vec![0.5; 33], vec![0.0; rows], 1, events, x, false)
    }

    fn toy_panel(inds: Vec<Individual>) -> Panel {
        Panel::new(inds, 2, 30.0, 1)
    }

    #[test]
    fn valid_panel_passes() {
        let p = toy_panel(vec![toy_individual(1, 2.5, vec![0.7, 1.1])]);
        assert!(p.validate().passed(), "{}", p.validate());
    }

    #[test]
    fn event_after_x_flagged() {
        let p = toy_panel(vec![toy_individual(1, 2.5, vec![0.7, 3.0])]);
        let report = p.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::EventAfterX { .. })));
    }

    #[test]
    fn incomplete_exposures_flagged() {
        let mut ind = toy_individual(1, 2.5, vec![]);
        ind.exposures.truncate(5); // only up to floor(X) < K
        let p = toy_panel(vec![ind]);
        assert!(p
            .validate()
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ExposureSeriesIncomplete { .. })));
    }

    #[test]
    fn nonpositive_x_rejected() {
        let mut ind = toy_individual(1, 2.5, vec![]);
        ind.x_time = 0.0;
        ind.covariates.truncate(2);
        let p = toy_panel(vec![ind]);
        assert!(p
            .validate()
            .violations
            .iter()
            .any(|v| matches!(v, Violation::XOutOfRange { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let p = toy_panel(vec![
            toy_individual(1, 2.5, vec![]),
            toy_individual(1, 3.5, vec![]),
        ]);
        assert!(p
            .validate()
            .violations
            .iter()
            .any(|v| matches!(v, Violation::DuplicateId { .. })));
    }

    #[test]
    fn covariates_past_x_rejected() {
        let mut ind = toy_individual(1, 2.5, vec![]);
        ind.covariates.push(0.0);
        let p = toy_panel(vec![ind]);
        assert!(p
            .validate()
            .violations
            .iter()
            .any(|v| matches!(v, Violation::CovariatePastX { .. })));
    }

    #[test]
    fn at_risk_boundary() {
        let ind = toy_individual(1, 2.5, vec![]);
        assert_eq!(ind.at_risk(2.5), 1.0);
        assert_eq!(ind.at_risk(2.5001), 0.0);
        let ind30 = toy_individual(2, 30.0, vec![]);
        assert_eq!(ind30.at_risk(0.0), 1.0);
    }

    #[test]
    fn events_in_half_open() {
        let ind = toy_individual(1, 10.0, vec![0.7, 1.1, 1.9]);
        let (n, ts) = ind.events_in(1.0, 2.0);
        assert_eq!(n, 2);
        assert_eq!(ts, &[1.1, 1.9]);

        let empty = toy_individual(2, 10.0, vec![]);
        assert_eq!(empty.events_in(0.0, 30.0).0, 0);

        let single = toy_individual(3, 10.0, vec![0.7]);
        assert_eq!(single.events_in(0.7, 0.71).0, 1);
    }

    #[test]
    fn events_partition_additivity() {
        let ind = toy_individual(1, 9.25, vec![0.3, 1.0, 1.5, 4.2, 9.0]);
        let total = ind.events_in(0.0, 30.0).0;
        let by_period: usize = (0..30).map(|k| ind.events_in(k as f64, k as f64 + 1.0).0).sum();
        assert_eq!(total, by_period);
        assert_eq!(total, 5);
    }

    #[test]
    fn at_risk_non_increasing() {
        let ind = toy_individual(1, 7.3, vec![]);
        let mut prev = 1.0;
        for i in 0..200 {
            let y = ind.at_risk(i as f64 * 0.05);
            assert!(y <= prev);
            prev = y;
        }
    }

    #[test]
    fn grid_midpoints() {
        let g = TimeGrid::default();
        let mids: Vec<f64> = g.midpoints(3).collect();
        assert_eq!(mids, vec![3.1, 3.3, 3.5, 3.7, 3.9]);
        assert!(mids.windows(2).all(|w| w[0] < w[1]));
        assert!(mids.iter().all(|&t| (3.0..4.0).contains(&t)));
    }
}
