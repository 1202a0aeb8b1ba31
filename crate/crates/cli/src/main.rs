//! `cvrp`: generate instances, solve them by policy iteration, run
//! baselines and aggregate gap reports.

mod commands;
mod overrides;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use overrides::Overrides;

#[derive(Parser)]
#[command(name = "cvrp", version, about = "Single-instance CVRP by policy iteration with MILP action selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write random unit-square instances and a manifest.
    Generate {
        /// Cities including the depot.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run policy iteration on one instance.
    Solve {
        /// Instance file (`.json` native format, anything else CVRPLIB).
        instance: PathBuf,
        /// JSON run configuration; unknown keys are rejected.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory for the curve, solution and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Save loop state here after every iteration and resume from it
        /// when present.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Validate and write the manifest without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Greedy policy or exact oracle on one instance or a directory suite.
    Baseline {
        #[arg(value_enum)]
        which: Baseline,
        /// Instance file or directory of instances.
        path: PathBuf,
        /// CSV output; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the greedy policy's warm-start stream.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Join solve outputs with reference costs into gap tables.
    Report {
        /// Directories written by `solve`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Baseline CSV with reference costs; repeated files are combined
        /// by taking the best cost per instance.
        #[arg(long, required = true)]
        reference: Vec<PathBuf>,
        /// Output directory for `report.csv` and `curves.csv`; the summary
        /// table goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Greedy,
    Oracle,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Greedy => "greedy",
            Baseline::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration contents.
    #[error("{0}")]
    Usage(String),
    /// Failure while doing the requested work.
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Generate { n, count, seed, out } => commands::generate(n, count, seed, &out),
        Command::Solve {
            instance,
            config,
            overrides,
            out,
            checkpoint,
            dry_run,
        } => commands::solve(&instance, config.as_deref(), &overrides, &out, checkpoint.as_deref(), dry_run),
        Command::Baseline { which, path, out, seed } => commands::baseline(which, &path, out.as_deref(), seed),
        Command::Report { runs, reference, out } => commands::report(&runs, &reference, out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
