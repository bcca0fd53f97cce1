//! Command line front end: loads a scenario file, assembles the model and
//! runs equilibrium solves, simulations, parameter sweeps and self-checks,
//! writing plain CSV next to a run manifest.

pub mod assemble;
pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fieldeq::simulate::SimError;
use fieldeq::solver::SolveError;
use thiserror::Error;

pub use config::{ConfigError, Scenario, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;
pub const EXIT_CHECKS_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "fieldeq", version, about = "Equilibria and delayed dynamics of controlled neural fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file.
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "fieldeq-out")]
    pub out: PathBuf,
    /// Overrides `solver.seed`; also seeds perturbations and random checks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for a closed-loop equilibrium.
    Equilibrium {
        #[command(flatten)]
        common: Common,
    },
    /// Integrate the delayed dynamics.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Start from a freshly solved equilibrium.
        #[arg(long, conflicts_with = "prehistory")]
        from_equilibrium: bool,
        /// CSV with `z1` and `z2` columns, one row per node.
        #[arg(long)]
        prehistory: Option<PathBuf>,
        /// Pair norm of a seeded random perturbation of the initial state.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
    },
    /// Solve once per value of a numeric parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted key, e.g. `control.k`.
        #[arg(long)]
        param: String,
        /// Comma separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Run the invariant checks on the loaded model.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("solver: {0}")]
    Solve(#[from] SolveError),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solve(SolveError::NonConvergence { .. } | SolveError::Model(_)) => EXIT_NO_CONVERGENCE,
            _ => EXIT_CONFIG,
        }
    }
}

impl<T: fieldeq::Real> From<SimError<T>> for CliError {
    fn from(e: SimError<T>) -> Self {
        CliError::Simulation(e.to_string())
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Equilibrium { common } => commands::equilibrium(&common),
        Command::Simulate {
            common,
            from_equilibrium,
            prehistory,
            perturb,
        } => commands::simulate(
            &common,
            &commands::SimulateFlags {
                from_equilibrium,
                prehistory,
                perturb,
            },
        ),
        Command::Sweep { common, param, values } => commands::sweep(&common, &param, &values),
        Command::Verify { common } => commands::verify(&common),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs them.
pub fn run_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}
