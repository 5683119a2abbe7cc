//! `maxmin-svm` command-line tool.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or
//! configuration error, 3 any other failure (I/O, malformed data, training
//! divergence).

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "maxmin-svm", version, about = "Max-min-margin multi-class linear SVM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes model.json and trace.csv.
    Train(Flags),
    /// Predict the class of every row of --data with --model.
    Predict(Flags),
    /// Accuracy and confusion matrix of --model on --data.
    Eval(Flags),
    /// Stratified k-fold cross-validation of one configuration.
    Cv(Flags),
    /// Cross-validate every (p, λ) cell; writes grid.csv.
    Gridsearch(Flags),
    /// Repeated grid-search protocol for several methods.
    Compare(Flags),
    /// Pairwise margins of a saved model.
    Margins(Flags),
    /// Finite-difference check of the analytic gradient.
    Gradcheck(Flags),
    /// Run the seeded property suite.
    Verify(Flags),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    CheckFailed(String),
    Runtime(maxmin_svm::Error),
}

impl From<maxmin_svm::Error> for CliError {
    fn from(e: maxmin_svm::Error) -> Self {
        match e {
            maxmin_svm::Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, flags): (fn(&RunConfig) -> Result<(), CliError>, Flags) = match cli.command {
        Command::Train(f) => (commands::train, f),
        Command::Predict(f) => (commands::predict, f),
        Command::Eval(f) => (commands::eval, f),
        Command::Cv(f) => (commands::cv, f),
        Command::Gridsearch(f) => (commands::gridsearch, f),
        Command::Compare(f) => (commands::compare, f),
        Command::Margins(f) => (commands::margins, f),
        Command::Gradcheck(f) => (commands::gradcheck, f),
        Command::Verify(f) => (commands::verify, f),
    };
    let result = RunConfig::resolve(flags)
        .and_then(|cfg| maxmin_svm::par::with_jobs(cfg.jobs, || run(&cfg)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("maxmin-svm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
