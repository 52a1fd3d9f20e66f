//! isocrit: monotone-constrained domain mean estimation from survey CSVs and
//! the Monte Carlo study runner behind it.

mod estimate;
mod simulate;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "isocrit",
    about = "Adaptive choice between unconstrained and monotone-constrained survey domain means",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate domain means from a CSV of survey observations
    Estimate(estimate::EstimateArgs),
    /// Run one simulation scenario (a named preset cell or a config file)
    Simulate(simulate::SimulateArgs),
    /// Run every cell of a numbered study table
    Table(simulate::TableArgs),
}

fn main() {
    // ISOCRIT_THREADS caps the worker pool; results do not depend on it
    if let Ok(value) = std::env::var("ISOCRIT_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate(args) => estimate::run(&args),
        Command::Simulate(args) => simulate::run_simulate(&args),
        Command::Table(args) => simulate::run_table(&args),
    };
    if let Err(err) = outcome {
        eprintln!("error: {}", err.message);
        std::process::exit(err.code);
    }
}

/// Error carrying the process exit code: 2 for malformed input or arguments,
/// 3 for an empty domain after binning.
pub(crate) struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn empty_domain(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}
