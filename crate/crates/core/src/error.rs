use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation left its numerical domain (non-finite intermediate,
    /// zero denominator, non-positive predicted mean, ...).
    #[error("numerical domain error in {location}: {message}")]
    NumericalDomain {
        location: &'static str,
        message: String,
    },

    /// An operation was invoked on state that breaks its contract.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A text input could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(location: &'static str, message: impl Into<String>) -> Self {
        Error::NumericalDomain {
            location,
            message: message.into(),
        }
    }
}
