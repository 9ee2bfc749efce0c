use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse failure at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(row: usize, column: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            row,
            column,
            message: message.into(),
        }
    }
}

impl From<fmahal::Error> for CliError {
    fn from(e: fmahal::Error) -> Self {
        match e {
            fmahal::Error::InvalidArgument(m) => CliError::Usage(m),
            fmahal::Error::NumericFailure(m) => CliError::Numeric(m),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
