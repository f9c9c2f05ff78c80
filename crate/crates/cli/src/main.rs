use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "actuator", version, about = "Phonetic-change simulator: analytic recurrences, agent-based runs and sweeps")]
struct Cli {
    /// Worker threads (0 = available parallelism). Output does not depend on it.
    #[arg(long, global = true, env = "ACTUATOR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus `key=value` overrides.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Key-value configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set lambda=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a configuration against every invariant.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Moment recurrences, fixed points and expansions.
    Analytic {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of generations to iterate from the start moments.
        #[arg(long, default_value_t = 100)]
        generations: usize,
        /// Number of teachers, overriding the teacher rule (2 or more).
        #[arg(long)]
        m: Option<u64>,
        /// CSV of (t, mean, var).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the configured estimator to a one-column CSV of examples.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        batch: PathBuf,
        /// Also report the grid-search estimate at this spacing (quadratic prior).
        #[arg(long)]
        grid_spacing: Option<f64>,
    },
    /// Run the agent-based simulation.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// `fixed:T`, `plateau` or `plateau:WINDOW:DELTA:CAP`.
        #[arg(long, default_value = "fixed:2500")]
        stop: String,
        #[arg(long)]
        out: PathBuf,
        /// Thresholded density export.
        #[arg(long)]
        density: Option<PathBuf>,
        /// `sufficient` or `examples`.
        #[arg(long, default_value = "sufficient")]
        batch_mode: String,
    },
    /// Run every cell of a parameter grid.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Leave the seconds column empty so the CSV is reproducible.
        #[arg(long)]
        no_timing: bool,
        #[arg(long, default_value = "sufficient")]
        batch_mode: String,
    },
    /// Locate bifurcations in a sweep CSV.
    Bifurcate {
        /// Sweep CSV.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Configuration supplying μ_a and μ_i for the jump threshold.
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare Monte Carlo moments with the analytic recurrence.
    CrossCheck {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 100)]
        generations: usize,
        /// Population size, overriding the configuration.
        #[arg(long = "M")]
        population: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "sufficient")]
        batch_mode: String,
    },
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Invariant or domain violation: exit 2.
    Domain(String),
    /// Unreadable input, unparseable text or unwritable output: exit 3.
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    let threads = pool.current_num_threads();
    match pool.install(|| commands::dispatch(cli.command, threads)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Domain(msg) => eprintln!("{msg}"),
                Failure::Io(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
