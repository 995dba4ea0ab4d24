//! End-to-end estimator pipelines: terminal-effect estimation (always
//! parametric), then the requested lagged-effect estimator, with optional
//! bootstrap inference on top.

use crate::bootstrap::{bootstrap, summarize, BootstrapResult};
use crate::error::{Error, Result};
use crate::exposure::{fit_mu_all, MuFlavor};
use crate::learners::LearnerSpec;
use crate::panel::{Panel, TimeGrid};
use crate::parametric::{fit_with_mu, EffectEstimates, Method};
use crate::robust::fit_robust;
use crate::terminal::estimate_alpha;
use serde::{Deserialize, Serialize};

/// One estimator configuration, reusable across panels and bootstrap
/// replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub m_lags: usize,
    pub grid: TimeGrid,
    /// Learner for nonparametric exposure models.
    pub mu_spec: LearnerSpec,
    /// Learner for the robust outcome-rate nuisance.
    pub rho_spec: LearnerSpec,
    /// Cross-fitting folds for the robust estimator.
    pub folds: usize,
    pub weight_cap: Option<f64>,
}

impl EstimatorConfig {
    pub fn new(method: Method, m_lags: usize) -> Self {
        Self {
            method,
            m_lags,
            grid: TimeGrid::default(),
            mu_spec: LearnerSpec::default_ensemble(),
            rho_spec: LearnerSpec::default_ensemble(),
            folds: 5,
            weight_cap: None,
        }
    }

    pub fn with_learner(mut self, spec: LearnerSpec) -> Self {
        self.mu_spec = spec.clone();
        self.rho_spec = spec;
        self
    }

    /// Fit all model components on a panel. `seed` drives the fold plan of
    /// the robust estimator; the other estimators are deterministic and
    /// ignore it.
    pub fn fit(&self, panel: &Panel, seed: u64) -> Result<EffectEstimates> {
        let report = panel.validate();
        if !report.passed() {
            return Err(Error::InvalidPanel(report));
        }
        let (alpha, parametric_mu, _alpha_diags) =
            estimate_alpha(panel, &self.grid, self.m_lags, self.weight_cap)?;

        match self.method {
            Method::Parametric => fit_with_mu(
                panel,
                &self.grid,
                &parametric_mu,
                &alpha,
                self.m_lags,
                Method::Parametric,
            ),
            Method::Nonparametric => {
                let mut tables = Vec::with_capacity(self.m_lags + 1);
                for m in 0..=self.m_lags {
                    tables.push(fit_mu_all(
                        panel,
                        None,
                        m,
                        &self.grid,
                        &alpha,
                        &self.mu_spec,
                        MuFlavor::Nonparametric,
                    )?);
                }
                fit_with_mu(
                    panel,
                    &self.grid,
                    &tables,
                    &alpha,
                    self.m_lags,
                    Method::Nonparametric,
                )
            }
            Method::Robust => fit_robust(
                panel,
                &self.grid,
                self.folds,
                seed,
                &self.mu_spec,
                &self.rho_spec,
                &alpha,
                self.m_lags,
            ),
        }
    }

    /// Fit on the panel and attach bootstrap standard errors and intervals
    /// (`r` replicates, each refitting every component on a resample).
    pub fn fit_with_bootstrap(
        &self,
        panel: &Panel,
        seed: u64,
        r: usize,
        ci_level: f64,
    ) -> Result<(EffectEstimates, Option<BootstrapResult>)> {
        let point = self.fit(panel, seed)?;
        if r == 0 {
            return Ok((point, None));
        }
        let boot = bootstrap(
            panel,
            |resampled, rep_seed| self.fit(resampled, rep_seed),
            r,
            seed,
            ci_level,
            self.method,
        )?;
        let summarized = summarize(&boot, &point)?;
        Ok((summarized, Some(boot)))
    }
}
