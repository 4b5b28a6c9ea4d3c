//! `optithresh`: choose, benchmark, and compare threshold sets from the command line.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 configuration
//! error, 3 data error, 4 infeasible problem.

mod commands;
mod config;
mod error;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optithresh_core::simulation::BenchmarkMethod;
use optithresh_core::{LossKind, Method};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "optithresh", version, about = "Data-driven thresholds for cohorts of bounded distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a threshold set for one cohort.
    Optimize(OptimizeArgs),
    /// Run the simulation benchmark.
    Simulate(SimulateArgs),
    /// Compare threshold sets between two labeled groups.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Quantile grid size M.
    #[arg(long, value_name = "INT")]
    grid_size: Option<usize>,
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory [default: optithresh-out].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long, value_name = "INT")]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    /// CGM CSV file (replaces the config's input).
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// l1, l2, or bray-curtis.
    #[arg(long)]
    loss: Option<LossKind>,
    /// exhaustive, sa, ss, de, or paa.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    k: Option<usize>,
    /// Thresholds that must be kept, e.g. 70,181.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    fixed: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated losses.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    loss: Option<Vec<LossKind>>,
    /// Comma-separated methods; `oracle` scores the true breakpoints.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    method: Option<Vec<BenchmarkMethod>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated breakpoint noise SDs.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    noise: Option<Vec<f64>>,
    /// Mixture weight scheme, 1 or 2.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    setting: Option<u8>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// CGM CSV file with a label column naming each subject's group.
    #[arg(long, value_name = "PATH", conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Use simulated narrow and wide groups.
    #[arg(long)]
    synthetic: bool,
    /// Loss for the data-driven candidate.
    #[arg(long)]
    loss: Option<LossKind>,
    /// Method for the data-driven candidate.
    #[arg(long)]
    method: Option<Method>,
    /// Number of thresholds in the data-driven candidate.
    #[arg(long)]
    k: Option<usize>,
    /// Thresholds the data-driven candidate must keep.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    fixed: Option<Vec<f64>>,
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("--threads", e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OPTITHRESH_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Optimize(a) => init_threads(a.common.threads).and_then(|_| commands::optimize(a)),
        Command::Simulate(a) => init_threads(a.common.threads).and_then(|_| commands::simulate(a)),
        Command::Evaluate(a) => init_threads(a.common.threads).and_then(|_| commands::evaluate(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
