//! Argument structs and config-file merging. Every command resolves its
//! effective parameters as: command-line flag, else config-file value, else
//! default; the resolved struct is echoed into the command's output.

use crate::commands::CliError;
use clap::Args;
use serde::{Deserialize, Serialize};
use sncure::learners::{GbtParams, LearnerSpec};
use std::path::{Path, PathBuf};

/// Optional per-command sections of the `--config` JSON file. Field names
/// match the long command-line flags with underscores.
#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub counterfactual: CounterfactualSection,
    #[serde(default)]
    pub replicate: ReplicateSection,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

macro_rules! pick {
    ($flag:expr, $file:expr, $default:expr) => {
        $flag.clone().or_else(|| $file.clone()).unwrap_or($default)
    };
    (required $flag:expr, $file:expr, $name:literal) => {
        $flag
            .clone()
            .or_else(|| $file.clone())
            .ok_or_else(|| CliError::Usage(concat!("missing required option: ", $name).into()))?
    };
}

/// Parse a learner name: `linear`, `ensemble`, `gbt`, or
/// `gbt:ROUNDS:LEARNING_RATE[:DEPTH]`.
pub fn parse_learner(s: &str) -> Result<LearnerSpec, CliError> {
    if s == "linear" {
        return Ok(LearnerSpec::Linear);
    }
    if s == "ensemble" {
        return Ok(LearnerSpec::default_ensemble());
    }
    if s == "gbt" {
        return Ok(LearnerSpec::Gbt(GbtParams::default()));
    }
    if let Some(rest) = s.strip_prefix("gbt:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() == 2 || parts.len() == 3 {
            let rounds = parts[0]
                .parse()
                .map_err(|_| CliError::Usage(format!("bad gbt rounds in {s:?}")))?;
            let lr = parts[1]
                .parse()
                .map_err(|_| CliError::Usage(format!("bad gbt learning rate in {s:?}")))?;
            let mut params = GbtParams::new(rounds, lr);
            if parts.len() == 3 {
                params.max_depth = parts[2]
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad gbt depth in {s:?}")))?;
            }
            return Ok(LearnerSpec::Gbt(params));
        }
    }
    Err(CliError::Usage(format!(
        "unknown learner {s:?} (expected linear, ensemble, gbt, or gbt:ROUNDS:LR[:DEPTH])"
    )))
}

fn parse_f64_list(s: &str, name: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad value {x:?} in --{name}")))
        })
        .collect()
}

// ----------------------------------------------------------------- simulate

#[derive(Debug, Default, Clone, Deserialize)]
pub struct SimulateSection {
    pub n: Option<usize>,
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub baseline_len: Option<usize>,
    pub beta_true: Option<Vec<f64>>,
    pub alpha_true: Option<Vec<f64>>,
    pub frailty_mean: Option<f64>,
    pub censor_scale: Option<f64>,
    pub var_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// simple | complex
    #[arg(long)]
    pub scenario: Option<String>,
    /// Master seed (required; no silent entropy).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub baseline_len: Option<usize>,
    /// Comma-separated true lagged effects on the event rate.
    #[arg(long)]
    pub beta_true: Option<String>,
    /// Comma-separated true lagged effects on the terminal rate.
    #[arg(long)]
    pub alpha_true: Option<String>,
    #[arg(long)]
    pub frailty_mean: Option<f64>,
    #[arg(long)]
    pub censor_scale: Option<f64>,
    #[arg(long)]
    pub var_ratio: Option<f64>,
    #[arg(long, default_value = "panel.csv")]
    pub out_panel: PathBuf,
    #[arg(long, default_value = "events.csv")]
    pub out_events: PathBuf,
    #[arg(long, default_value = "meta.json")]
    pub out_meta: PathBuf,
}

impl SimulateArgs {
    pub fn resolve(&self, file: &SimulateSection) -> Result<sncure::simulate::SimConfig, CliError> {
        use sncure::simulate::{Scenario, SimConfig};
        let scenario_name = pick!(self.scenario, file.scenario, "simple".to_string());
        let scenario: Scenario = scenario_name
            .parse()
            .map_err(|e| CliError::Usage(format!("{e}")))?;
        let n = pick!(required self.n, file.n, "--n");
        let seed = pick!(required self.seed, file.seed, "--seed");
        let mut cfg = SimConfig::new(n, scenario, seed);
        cfg.horizon = pick!(self.horizon, file.horizon, cfg.horizon);
        cfg.baseline_len = pick!(self.baseline_len, file.baseline_len, cfg.baseline_len);
        if self.baseline_len.or(file.baseline_len).is_some()
            && self.beta_true.is_none()
            && file.beta_true.is_none()
        {
            cfg.beta_true = vec![0.0; cfg.baseline_len + 1];
            cfg.beta_true[0] = 0.1;
        }
        if let Some(s) = &self.beta_true {
            cfg.beta_true = parse_f64_list(s, "beta-true")?;
        } else if let Some(v) = &file.beta_true {
            cfg.beta_true = v.clone();
        }
        if let Some(s) = &self.alpha_true {
            cfg.alpha_true = parse_f64_list(s, "alpha-true")?;
        } else if let Some(v) = &file.alpha_true {
            cfg.alpha_true = v.clone();
        }
        cfg.frailty_mean = pick!(self.frailty_mean, file.frailty_mean, cfg.frailty_mean);
        cfg.censor_scale = pick!(self.censor_scale, file.censor_scale, cfg.censor_scale);
        cfg.var_ratio = pick!(self.var_ratio, file.var_ratio, cfg.var_ratio);
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------- fit

#[derive(Debug, Default, Clone, Deserialize)]
pub struct FitSection {
    pub estimator: Option<String>,
    pub m_lags: Option<usize>,
    pub grid_bins: Option<usize>,
    pub folds: Option<usize>,
    pub learner: Option<String>,
    pub weight_cap: Option<f64>,
    pub bootstrap: Option<usize>,
    pub ci_level: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    /// parametric | nonparametric | robust
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub m_lags: Option<usize>,
    /// Time bins per period for pseudo-data and quadrature.
    #[arg(long)]
    pub grid_bins: Option<usize>,
    /// Cross-fitting folds (robust estimator).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Nuisance learner for nonparametric fits.
    #[arg(long)]
    pub learner: Option<String>,
    /// Clamp risk-set weights into [1/cap, cap].
    #[arg(long)]
    pub weight_cap: Option<f64>,
    /// Bootstrap replicates (0: point estimates only).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub ci_level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "estimates.json")]
    pub out: PathBuf,
}

/// Effective fit configuration; echoed into the output JSON.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedFit {
    pub panel: PathBuf,
    pub events: PathBuf,
    pub estimator: sncure::parametric::Method,
    pub m_lags: usize,
    pub grid_bins: usize,
    pub folds: usize,
    pub learner: LearnerSpec,
    pub weight_cap: Option<f64>,
    pub bootstrap: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl FitArgs {
    pub fn resolve(&self, file: &FitSection) -> Result<ResolvedFit, CliError> {
        let estimator_name = pick!(self.estimator, file.estimator, "parametric".to_string());
        let estimator = estimator_name
            .parse()
            .map_err(|e| CliError::Usage(format!("{e}")))?;
        let learner_name = pick!(self.learner, file.learner, "ensemble".to_string());
        Ok(ResolvedFit {
            panel: self.panel.clone(),
            events: self.events.clone(),
            estimator,
            m_lags: pick!(self.m_lags, file.m_lags, 4),
            grid_bins: pick!(self.grid_bins, file.grid_bins, 5),
            folds: pick!(self.folds, file.folds, 5),
            learner: parse_learner(&learner_name)?,
            weight_cap: self.weight_cap.or(file.weight_cap),
            bootstrap: pick!(self.bootstrap, file.bootstrap, 0),
            ci_level: pick!(self.ci_level, file.ci_level, 0.95),
            seed: pick!(self.seed, file.seed, 0),
        })
    }
}

// ------------------------------------------------------------ counterfactual

#[derive(Debug, Default, Clone, Deserialize)]
pub struct CounterfactualSection {
    pub cap: Option<Vec<f64>>,
    pub t_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CounterfactualArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    /// Estimates JSON produced by `fit`.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Exposure cap; repeat for several scenarios.
    #[arg(long)]
    pub cap: Vec<f64>,
    /// Evaluation end time (default: end of study).
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value = "averted.csv")]
    pub out: PathBuf,
}

// ------------------------------------------------------------------ replicate

#[derive(Debug, Default, Clone, Deserialize)]
pub struct ReplicateSection {
    pub scenario: Option<String>,
    pub n: Option<usize>,
    pub replicates: Option<usize>,
    pub bootstrap: Option<usize>,
    pub estimators: Option<Vec<String>>,
    pub m_lags: Option<usize>,
    pub grid_bins: Option<usize>,
    pub folds: Option<usize>,
    pub learner: Option<String>,
    pub ci_level: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// simple | complex
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte Carlo replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Bootstrap replicates per fit (0 disables SE/coverage columns).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Comma-separated list: parametric,nonparametric,robust
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub m_lags: Option<usize>,
    #[arg(long)]
    pub grid_bins: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Nuisance learner for the nonparametric/robust estimators.
    #[arg(long)]
    pub learner: Option<String>,
    #[arg(long)]
    pub ci_level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "replication.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedReplicate {
    pub scenario: String,
    pub n: usize,
    pub replicates: usize,
    pub bootstrap: usize,
    pub estimators: Vec<sncure::parametric::Method>,
    pub m_lags: usize,
    pub grid_bins: usize,
    pub folds: usize,
    pub learner: LearnerSpec,
    pub ci_level: f64,
    pub seed: u64,
}

impl ReplicateArgs {
    pub fn resolve(&self, file: &ReplicateSection) -> Result<ResolvedReplicate, CliError> {
        let estimator_names: Vec<String> = match (&self.estimators, &file.estimators) {
            (Some(s), _) => s.split(',').map(|x| x.trim().to_string()).collect(),
            (None, Some(v)) => v.clone(),
            (None, None) => vec![
                "parametric".into(),
                "nonparametric".into(),
                "robust".into(),
            ],
        };
        let estimators = estimator_names
            .iter()
            .map(|s| s.parse().map_err(|e| CliError::Usage(format!("{e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let learner_name = pick!(self.learner, file.learner, "gbt:50:0.1".to_string());
        Ok(ResolvedReplicate {
            scenario: pick!(self.scenario, file.scenario, "simple".to_string()),
            n: pick!(required self.n, file.n, "--n"),
            replicates: pick!(self.replicates, file.replicates, 100),
            bootstrap: pick!(self.bootstrap, file.bootstrap, 200),
            estimators,
            m_lags: pick!(self.m_lags, file.m_lags, 4),
            grid_bins: pick!(self.grid_bins, file.grid_bins, 5),
            folds: pick!(self.folds, file.folds, 5),
            learner: parse_learner(&learner_name)?,
            ci_level: pick!(self.ci_level, file.ci_level, 0.95),
            seed: pick!(required self.seed, file.seed, "--seed"),
        })
    }
}
