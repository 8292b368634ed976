//! `nbmf`: simulate, split, train, evaluate and inspect NB matrix
//! factorization models from the command line.
//!
//! Exit codes: 0 on success, 2 for usage/validation problems, 3 for
//! runtime/numerical failures.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    message: String,
    exit_code: u8,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: 2,
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: 3,
        }
    }

    pub fn from_io(e: std::io::Error) -> Self {
        Self::runtime(format!("I/O error: {e}"))
    }
}

impl From<nbmf::Error> for CliError {
    fn from(e: nbmf::Error) -> Self {
        match &e {
            nbmf::Error::InvalidArgument(_)
            | nbmf::Error::ContractViolation(_)
            | nbmf::Error::Parse { .. } => Self::usage(e.to_string()),
            nbmf::Error::NumericalDomain { .. } | nbmf::Error::Io(_) => {
                Self::runtime(e.to_string())
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "nbmf",
    version,
    about = "Negative binomial matrix factorization for implicit-feedback counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a planted-factor dataset from the generative model.
    Simulate(commands::simulate::Args),
    /// Split the nonzeros of a triplet file into train and test matrices.
    Split(commands::split::Args),
    /// Filter/binarize a triplet file and write it back out.
    Export(commands::export::Args),
    /// Fit a model (mm | cavi | pf | pf-bin) and persist it.
    Train(commands::train::Args),
    /// Score a model against a held-out test file with NDCG.
    Evaluate(commands::evaluate::Args),
    /// Top-N recommendations plus exposure diagnostics for one user.
    Recommend(commands::recommend::Args),
    /// Re-execute a command recorded in a manifest.
    Rerun(commands::rerun::Args),
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Split(args) => commands::split::run(args),
        Command::Export(args) => commands::export::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Recommend(args) => commands::recommend::run(args),
        Command::Rerun(args) => commands::rerun::run(args),
    }
}

/// Replay entry point for `rerun`: parse a full argv and dispatch it.
pub(crate) fn dispatch_argv(argv: &[String]) -> Result<(), CliError> {
    let cli = Cli::try_parse_from(argv)
        .map_err(|e| CliError::usage(format!("replayed command failed to parse: {e}")))?;
    dispatch(cli)
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("NBMF_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| CliError::usage(format!("NBMF_THREADS must be an integer, got {raw:?}")))?;
        if n == 0 {
            return Err(CliError::usage("NBMF_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| dispatch(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit_code)
        }
    }
}
