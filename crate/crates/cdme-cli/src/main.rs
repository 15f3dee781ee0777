//! `cdme`: solve birth-death reaction-diffusion master equations on [0, 1],
//! write the density tables and cross-validate every route.
//!
//! Exit codes: 0 success, 1 configuration error, 2 validation failure,
//! 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load_raw, Config, Overrides};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Validation(String),
    Numerical(cdme::CdmeError),
}

impl From<cdme::CdmeError> for CliError {
    fn from(e: cdme::CdmeError) -> Self {
        CliError::Numerical(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Validation(msg) => write!(f, "validation failure: {msg}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cdme",
    about = "Birth-death reaction-diffusion master equation toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario: constant, dirac0 or dirac-half.
    #[arg(long, global = true, value_name = "NAME")]
    scenario: Option<String>,
    /// Output directory for CSV tables.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for every stochastic component.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (0 = machine parallelism).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Series truncation.
    #[arg(long = "n-trunc", global = true, value_name = "N")]
    n_trunc: Option<usize>,
    /// Spatial grid nodes.
    #[arg(long, global = true, value_name = "M")]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured scenario and write the density tables.
    Solve,
    /// Run the property suite for the configured scenario.
    Validate,
    /// Run the particle ensemble and write empirical-vs-analytic tables.
    Simulate,
    /// Tabulate the truncation error of the spectral series.
    Convergence,
    /// Simulate, then test the ensemble against the analytic law.
    Compare,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let raw = load_raw(cli.config.as_deref())?;
    let overrides = Overrides {
        scenario: cli.scenario,
        out_dir: cli.out,
        seed: cli.seed,
        threads: cli.threads,
        n_trunc: cli.n_trunc,
        grid: cli.grid,
    };
    let cfg = Config::resolve(raw, &overrides)?;

    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Solve => commands::cmd_solve(&cfg),
        Command::Validate => commands::cmd_validate(&cfg),
        Command::Simulate => commands::cmd_simulate(&cfg),
        Command::Convergence => commands::cmd_convergence(&cfg),
        Command::Compare => commands::cmd_compare(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let benign = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
