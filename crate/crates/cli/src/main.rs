//! `simrel`: grid generation, training, certification, transfer simulation
//! and Lipschitz sanity checks, driven by a TOML run config.
//!
//! Exit codes: 0 success, 1 certification or check failure, 2 usage or
//! config error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simrel::trainer::StepMode;

#[derive(Debug, Parser)]
#[command(name = "simrel", version, about = "Neural simulation relations for controller transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
    /// Run config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for training, transfer trials and lipcheck sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the data-parallel sweeps; defaults to all cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub mode: Option<StepMode>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Builtin system for `info`.
    #[arg(long, global = true)]
    pub system: Option<String>,
    /// Report path for `certify`; defaults to `<out>/report.toml`.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Cmd {
    /// Build the joint grid and write its metadata.
    GenGrid,
    /// Run the alternating training loop and certify the result.
    Train,
    /// Re-certify saved checkpoints against the config.
    Certify,
    /// Simulate the source controller transferred through K.
    Transfer,
    /// Sample the declared Lipschitz constants of both systems.
    Lipcheck,
    /// Print a system's sets and constants.
    Info,
}

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: configuring workers: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let run_failure = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<simrel::Error>(),
                    Some(simrel::Error::Diverged(_)) | Some(simrel::Error::NoMatchingInitialState { .. })
                )
            });
            ExitCode::from(if run_failure { 1 } else { 2 })
        }
    }
}
