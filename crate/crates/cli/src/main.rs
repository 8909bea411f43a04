//! `acousto`: training, simulation, serving and reporting for the gesture
//! coordinator.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

mod bench;
mod fixtures;
mod report;
mod serve;
mod simulate;
mod svg;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use acousto_core::coordinator::{CoordinatorConfig, CONFIG_ENV};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "acousto",
    version,
    about = "Gesture-driven acoustic robot swarm coordinator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a linear probe on an embeddings file.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint on an embeddings file.
    Eval(train::EvalArgs),
    /// Generate a synthetic embeddings file.
    GenData(train::GenDataArgs),
    /// Run the coordinator against live sockets.
    Serve(serve::ServeArgs),
    /// Run a scenario on the virtual clock and write telemetry.
    Sim(simulate::SimArgs),
    /// Time the in-process frame to command path on this host.
    BenchLatency(bench::BenchArgs),
    /// Summarise training histories or simulation telemetry.
    Report(report::ReportArgs),
    /// Write reference fixtures for every file and wire format.
    ExportFixtures(fixtures::FixtureArgs),
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

pub fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

/// `--config`, then `$ACOUSTO_CONFIG`, then `fallback`.
pub fn load_config(
    path: Option<&PathBuf>,
    fallback: impl FnOnce() -> CoordinatorConfig,
) -> CliResult<CoordinatorConfig> {
    let path = path
        .cloned()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => CoordinatorConfig::load(&p)
            .map_err(|e| usage(anyhow::anyhow!("config {}: {e}", p.display()))),
        None => {
            let cfg = fallback();
            cfg.validate().map_err(usage)?;
            Ok(cfg)
        }
    }
}

pub fn read_text(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| usage(anyhow::anyhow!("cannot read {}: {e}", path.display())))
}

pub fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| runtime(anyhow::anyhow!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| runtime(anyhow::anyhow!("cannot write {}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run_train(a),
        Command::Eval(a) => train::run_eval(a),
        Command::GenData(a) => train::run_gen_data(a),
        Command::Serve(a) => serve::run(a),
        Command::Sim(a) => simulate::run(a),
        Command::BenchLatency(a) => bench::run(a),
        Command::Report(a) => report::run(a),
        Command::ExportFixtures(a) => fixtures::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
