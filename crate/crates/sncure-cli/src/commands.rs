//! Command implementations.

use crate::config::{
    CounterfactualArgs, FileConfig, FitArgs, ReplicateArgs, ResolvedFit, SimulateArgs,
};
use serde::{Deserialize, Serialize};
use sncure::bootstrap::BootstrapResult;
use sncure::counterfactual::{averted_curve_ci, events_averted, CapScenario};
use sncure::error::Error;
use sncure::io::{fmt_f64, read_panel, write_panel};
use sncure::panel::TimeGrid;
use sncure::parametric::EffectEstimates;
use sncure::pipeline::EstimatorConfig;
use sncure::simulate::simulate_study;
use std::fmt;
use std::io::Write;
use std::time::Instant;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Validation(m) => write!(f, "validation: {m}"),
            CliError::Numerical(m) => write!(f, "numerical: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            Error::InvalidConfig(_) | Error::TooFewIndividuals { .. } => {
                CliError::Usage(e.to_string())
            }
            Error::InvalidPanel(_) | Error::Parse { .. } | Error::Csv(_) => {
                CliError::Validation(e.to_string())
            }
            Error::Io(_) | Error::Json(_) => CliError::Io(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

// ------------------------------------------------------------------ simulate

pub fn simulate(args: SimulateArgs, file: &FileConfig) -> Result<(), CliError> {
    let cfg = args.resolve(&file.simulate)?;
    cfg.validate().map_err(CliError::from)?;
    let started = Instant::now();
    let (panel, meta) = simulate_study(&cfg)?;
    write_panel(&panel, &args.out_panel, &args.out_events)?;

    #[derive(Serialize)]
    struct MetaOut<'a> {
        config: &'a sncure::simulate::SimConfig,
        realized_c: f64,
        norm_min: f64,
        norm_max: f64,
        n_individuals: usize,
        n_events: usize,
        n_deaths: usize,
        wall_seconds: f64,
    }
    write_json(
        &args.out_meta,
        &MetaOut {
            config: &meta.config,
            realized_c: meta.c,
            norm_min: meta.norm_min,
            norm_max: meta.norm_max,
            n_individuals: panel.n(),
            n_events: panel.individuals.iter().map(|i| i.event_times().len()).sum(),
            n_deaths: panel.individuals.iter().filter(|i| i.death_observed).count(),
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    )
}

// ----------------------------------------------------------------------- fit

/// Serialized output of `fit`; `counterfactual` consumes it.
#[derive(Serialize, Deserialize)]
pub struct FitOutput {
    pub config: serde_json::Value,
    pub estimates: EffectEstimates,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapResult>,
    pub timings: Timings,
}

#[derive(Serialize, Deserialize)]
pub struct Timings {
    pub fit_seconds: f64,
    pub bootstrap_seconds: f64,
}

fn estimator_config(resolved: &ResolvedFit) -> EstimatorConfig {
    let mut cfg = EstimatorConfig::new(resolved.estimator, resolved.m_lags);
    cfg.grid = TimeGrid::new(resolved.grid_bins);
    cfg.folds = resolved.folds;
    cfg.weight_cap = resolved.weight_cap;
    cfg.mu_spec = resolved.learner.clone();
    cfg.rho_spec = resolved.learner.clone();
    cfg
}

pub fn fit(args: FitArgs, file: &FileConfig) -> Result<(), CliError> {
    let resolved = args.resolve(&file.fit)?;
    let panel = read_panel(&resolved.panel, &resolved.events)?;
    let report = panel.validate();
    if !report.passed() {
        return Err(CliError::Validation(format!("{report}")));
    }
    let cfg = estimator_config(&resolved);

    let t_fit = Instant::now();
    let point = cfg.fit(&panel, resolved.seed)?;
    let fit_seconds = t_fit.elapsed().as_secs_f64();

    let t_boot = Instant::now();
    let (estimates, bootstrap) = if resolved.bootstrap > 0 {
        let boot = sncure::bootstrap::bootstrap(
            &panel,
            |p, s| cfg.fit(p, s),
            resolved.bootstrap,
            resolved.seed,
            resolved.ci_level,
            resolved.estimator,
        )?;
        let summarized = sncure::bootstrap::summarize(&boot, &point)?;
        (summarized, Some(boot))
    } else {
        (point, None)
    };
    let bootstrap_seconds = t_boot.elapsed().as_secs_f64();

    write_json(
        &args.out,
        &FitOutput {
            config: serde_json::to_value(&resolved).map_err(|e| CliError::Io(e.to_string()))?,
            estimates,
            bootstrap,
            timings: Timings {
                fit_seconds,
                bootstrap_seconds,
            },
        },
    )
}

// ------------------------------------------------------------ counterfactual

pub fn counterfactual(args: CounterfactualArgs, file: &FileConfig) -> Result<(), CliError> {
    let caps: Vec<f64> = if !args.cap.is_empty() {
        args.cap.clone()
    } else {
        file.counterfactual.cap.clone().unwrap_or_default()
    };
    if caps.is_empty() {
        return Err(CliError::Usage("at least one --cap is required".into()));
    }
    let panel = read_panel(&args.panel, &args.events)?;
    let report = panel.validate();
    if !report.passed() {
        return Err(CliError::Validation(format!("{report}")));
    }
    let t_end = args
        .t_end
        .or(file.counterfactual.t_end)
        .unwrap_or(panel.tau);

    let text = std::fs::read_to_string(&args.estimates)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.estimates.display())))?;
    let fit_out: FitOutput =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{e}")))?;

    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&args.out)
            .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?,
    );
    writeln!(out, "label,cap,period,cumulative_averted,lo,hi")
        .map_err(|e| CliError::Io(e.to_string()))?;
    for cap in caps {
        let scenario = CapScenario::new(cap, format!("cap_{cap}"))?;
        match &fit_out.bootstrap {
            Some(boot) if !boot.replicates.is_empty() => {
                let rows =
                    averted_curve_ci(&panel, boot, &fit_out.estimates, &scenario, t_end)?;
                for (k, v, lo, hi) in rows {
                    writeln!(
                        out,
                        "{},{},{k},{},{},{}",
                        scenario.label,
                        fmt_f64(cap),
                        fmt_f64(v),
                        fmt_f64(lo),
                        fmt_f64(hi)
                    )
                    .map_err(|e| CliError::Io(e.to_string()))?;
                }
            }
            _ => {
                let (_, curve) = events_averted(&panel, &fit_out.estimates, &scenario, t_end)?;
                for (k, v) in curve.periods.iter().zip(&curve.cumulative) {
                    writeln!(out, "{},{},{k},{},,", scenario.label, fmt_f64(cap), fmt_f64(*v))
                        .map_err(|e| CliError::Io(e.to_string()))?;
                }
            }
        }
    }
    out.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

// ------------------------------------------------------------------ replicate

pub fn replicate(args: ReplicateArgs, file: &FileConfig) -> Result<(), CliError> {
    use rayon::prelude::*;
    let resolved = args.resolve(&file.replicate)?;
    let scenario: sncure::simulate::Scenario = resolved
        .scenario
        .parse()
        .map_err(|e| CliError::Usage(format!("{e}")))?;

    struct RepResult {
        beta: Vec<Vec<f64>>,          // per estimator
        se: Vec<Option<Vec<f64>>>,    // per estimator
        ci: Vec<Option<Vec<(f64, f64)>>>,
    }

    let sim_cfg = sncure::simulate::SimConfig::new(resolved.n, scenario, resolved.seed);
    let truth = sim_cfg.beta_true.clone();

    let reps: Vec<Result<RepResult, CliError>> = (0..resolved.replicates)
        .into_par_iter()
        .map(|r| {
            let mut cfg_r = sim_cfg.clone();
            cfg_r.seed = resolved.seed.wrapping_add(0x9E37_79B9 * (r as u64 + 1));
            let (panel, _) = simulate_study(&cfg_r)?;
            let mut beta = Vec::new();
            let mut se = Vec::new();
            let mut ci = Vec::new();
            for &method in &resolved.estimators {
                let est_cfg = estimator_config(&ResolvedFit {
                    panel: Default::default(),
                    events: Default::default(),
                    estimator: method,
                    m_lags: resolved.m_lags,
                    grid_bins: resolved.grid_bins,
                    folds: resolved.folds,
                    learner: resolved.learner.clone(),
                    weight_cap: None,
                    bootstrap: resolved.bootstrap,
                    ci_level: resolved.ci_level,
                    seed: cfg_r.seed,
                });
                let (est, _) = est_cfg.fit_with_bootstrap(
                    &panel,
                    cfg_r.seed,
                    resolved.bootstrap,
                    resolved.ci_level,
                )?;
                beta.push(est.beta.clone());
                se.push(est.se.clone());
                ci.push(est.ci.clone());
            }
            Ok(RepResult { beta, se, ci })
        })
        .collect();

    let mut done = Vec::with_capacity(reps.len());
    for r in reps {
        done.push(r?);
    }

    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&args.out)
            .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?,
    );
    writeln!(out, "estimator,lag,sqrtn_bias,se_x100,coverage")
        .map_err(|e| CliError::Io(e.to_string()))?;
    let r_count = done.len() as f64;
    for (e_idx, method) in resolved.estimators.iter().enumerate() {
        for m in 0..=resolved.m_lags {
            let truth_m = truth.get(m).copied().unwrap_or(0.0);
            let mean_beta =
                done.iter().map(|d| d.beta[e_idx][m]).sum::<f64>() / r_count;
            let sqrtn_bias = (resolved.n as f64).sqrt() * (mean_beta - truth_m);
            let se_cell = if done.iter().all(|d| d.se[e_idx].is_some()) {
                let mean_se = done
                    .iter()
                    .map(|d| d.se[e_idx].as_ref().unwrap()[m])
                    .sum::<f64>()
                    / r_count;
                format!("{:.6}", 100.0 * mean_se)
            } else {
                String::new()
            };
            let cov_cell = if done.iter().all(|d| d.ci[e_idx].is_some()) {
                let covered = done
                    .iter()
                    .filter(|d| {
                        let (lo, hi) = d.ci[e_idx].as_ref().unwrap()[m];
                        lo <= truth_m && truth_m <= hi
                    })
                    .count();
                format!("{:.6}", covered as f64 / r_count)
            } else {
                String::new()
            };
            writeln!(
                out,
                "{method},{m},{sqrtn_bias:.6},{se_cell},{cov_cell}"
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    out.flush().map_err(|e| CliError::Io(e.to_string()))?;

    // sidecar with the effective configuration
    let cfg_path = args.out.with_extension("config.json");
    write_json(&cfg_path, &resolved)
}
