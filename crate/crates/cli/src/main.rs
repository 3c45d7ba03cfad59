//! `ybus`: simulate measurement campaigns, estimate admittance matrices,
//! score estimates and benchmark the solvers.

mod commands;
mod manifest;
mod suite;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ybus_core::estimators::Method;

/// Thread count for the parallel parts of simulation and estimation.
const THREADS_ENV: &str = "YBUS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ybus", version, about = "Admittance matrix identification from phasor measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a feeder and write noisy and exact measurements plus the
    /// ground-truth matrices.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the grid, load and noise seeds of the scenario.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the admittance matrix from a measurement CSV.
    Estimate {
        /// Measurement CSV written by `simulate` (with its `.meta.json`).
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Prior configuration (TOML); MAP only.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Solver configuration (TOML); MLE and MAP.
        #[arg(long)]
        solver: Option<PathBuf>,
        /// Recorded as the solver seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Ground truth to score the estimate against.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimate against the ground truth.
    Evaluate {
        /// Estimate matrix: a `.triplets` file, a dense `.csv`, or an
        /// `estimate` output directory.
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark suite: solver speed comparison and noise sweep.
    Benchmark {
        #[arg(long)]
        suite: PathBuf,
        /// Replaces the suite's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: ybus_core::Error| e.to_string())
}

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration (exit code 2).
    Config(String),
    /// Singular data or a numerical failure (exit code 3).
    Numerical(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<ybus_core::Error> for CliError {
    fn from(e: ybus_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| CliError::config(format!("{THREADS_ENV}='{value}' is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { scenario, seed, out } => commands::simulate(&scenario, seed, &out),
        Command::Estimate { measurements, method, prior, solver, seed, truth, out } => commands::estimate(
            &commands::EstimateArgs {
                measurements,
                method,
                prior,
                solver,
                seed,
                truth,
            },
            &out,
        ),
        Command::Evaluate { estimate, truth, out } => commands::evaluate(&estimate, &truth, &out),
        Command::Benchmark { suite, seed, out } => suite::benchmark(&suite, seed, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
