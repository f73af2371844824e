mod commands;
mod config;
mod document;
mod ingest;
mod params;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BootstrapArgs, McBenchArgs, NotConverged, SimulateArgs};
use config::{RunArgs, UsageError};
use ingest::DataError;
use params::ParamsArgs;
use report::ReportArgs;

/// Joint distribution of two mismeasured incomes: fit, derive mobility
/// measures, bootstrap them, and run the simulation study.
#[derive(Debug, Parser)]
#[command(name = "mecop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the model and write model.json.
    Fit(RunArgs),
    /// Evaluate functionals of a fitted model.
    Params(ParamsArgs),
    /// Bootstrap standard errors by refitting on resampled rows.
    Bootstrap(BootstrapArgs),
    /// Write a simulated dataset.
    Simulate(SimulateArgs),
    /// Run the simulation study and write RMSE tables.
    McBench(McBenchArgs),
    /// Print a summary of a fitted model.
    Report(ReportArgs),
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const NON_CONVERGENCE: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if cause.is::<DataError>() || cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return DATA;
        }
        if cause.is::<NotConverged>() {
            return NON_CONVERGENCE;
        }
        if let Some(e) = cause.downcast_ref::<mecop::Error>() {
            use mecop::Error::*;
            return match e {
                QrNonConvergence { .. } | NonConvergence(_) | TooManyDropped { .. } => NON_CONVERGENCE,
                InvalidDataset(_) | SingularDesign { .. } | EmptyBin { .. } | UndefinedCorrelation(_) | Lifecycle(_) => {
                    DATA
                }
                InvalidGrid(_) | InvalidMixture(_) | CopulaDomain { .. } | InvalidConfig(_) => USAGE,
            };
        }
    }
    USAGE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Params(a) => params::run(a),
        Command::Bootstrap(a) => commands::bootstrap(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::McBench(a) => commands::mc_bench(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
