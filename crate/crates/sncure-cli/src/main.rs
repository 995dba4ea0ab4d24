//! Batch interface: simulate studies, fit estimators with bootstrap
//! inference, evaluate counterfactual exposure caps, and run Monte Carlo
//! replication sweeps.
//!
//! Option precedence is command line over `--config` JSON file over
//! defaults; every output embeds the effective configuration. Exit codes:
//! 0 success, 2 usage, 3 validation, 4 numerical failure, 5 I/O.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sncure", version, about = "Lagged exposure effects on recurrent events")]
struct Cli {
    /// Worker threads (default: all cores; env SNCURE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic study panel.
    Simulate(config::SimulateArgs),
    /// Fit lagged-effect estimates on a panel, optionally with bootstrap.
    Fit(config::FitArgs),
    /// Cumulative events averted under exposure caps.
    Counterfactual(config::CounterfactualArgs),
    /// Monte Carlo replication sweep with bias/SE/coverage summary.
    Replicate(config::ReplicateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("SNCURE_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let file_cfg = match config::load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return report(e),
    };

    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args, &file_cfg),
        Command::Fit(args) => commands::fit(args, &file_cfg),
        Command::Counterfactual(args) => commands::counterfactual(args, &file_cfg),
        Command::Replicate(args) => commands::replicate(args, &file_cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: commands::CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}
