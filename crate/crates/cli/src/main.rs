//! `efold` command-line tool.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{
    EfoldArgs, EvaluateArgs, PreprocessArgs, SimulateArgs, SplitArgs, StatsArgs,
};
use crate::config::{GlobalArgs, Settings};

/// e-fold cross-validation for top-n recommenders.
#[derive(Debug, Parser)]
#[command(name = "efold", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert to implicit feedback, k-core prune and write the canonical file
    Preprocess(PreprocessArgs),
    /// Create a user-stratified k-way partition plan
    Split(SplitArgs),
    /// Score algorithms on every fold and append to the score cache
    Evaluate(EvaluateArgs),
    /// Run folds one by one until the stopping criterion fires
    Efold(EfoldArgs),
    /// Replay cached fold scores under many fold orders
    Simulate(SimulateArgs),
    /// Print dataset statistics as JSON
    Stats(StatsArgs),
}

#[derive(Debug)]
pub enum CliError {
    Lib(efold::Error),
    Usage(String),
    /// Already printed to stderr.
    Reported,
}

impl From<efold::Error> for CliError {
    fn from(e: efold::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn report(&self) {
        match self {
            CliError::Lib(e) => eprintln!("{}: {e}", e.code()),
            CliError::Usage(msg) => eprintln!("EFOLD-E001: {msg}"),
            CliError::Reported => {}
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Preprocess(args) => commands::preprocess(&settings, args),
        Command::Split(args) => commands::split(&settings, args),
        Command::Evaluate(args) => commands::evaluate(&settings, args),
        Command::Efold(args) => commands::efold(&settings, args),
        Command::Simulate(args) => commands::simulate(&settings, args),
        Command::Stats(args) => commands::stats(&settings, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("EFOLD-E001: {e}");
            return ExitCode::from(2);
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::FAILURE
        }
    }
}
