//! Crate-wide error type.
//!
//! Errors are grouped by what the caller can do about them: bad arguments or
//! configuration, malformed or inconsistent data, and numerical failures
//! during optimization. The CLI maps these groups onto distinct exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration value.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed input data (bad CSV row, unparseable field, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Inputs that parse but contradict each other (visit to a restaurant
    /// missing from the visitor's choice set, unknown ids, ...).
    #[error("data inconsistency: {0}")]
    DataInconsistency(String),

    /// Numerical failure during fitting (non-finite gradient or objective).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let msg = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => Error::Data(msg),
        }
    }
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn inconsistent(msg: impl Into<String>) -> Self {
        Error::DataInconsistency(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
