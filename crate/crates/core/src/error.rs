//! Error type shared by all modules.

use thiserror::Error;

/// Coarse category used by callers (e.g. the CLI) to map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input: schema, parse, or validation failures.
    Input,
    /// Nonparametric estimation or inference failure.
    Inference,
    /// EM / inner-solver failure in the semiparametric model.
    Em,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column '{0}' in CSV header")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("sample '{0}' has no events: MST undefined")]
    NoEvents(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("{0}")]
    Singular(String),

    #[error("{0}")]
    NonConvergence(String),

    #[error("{0}")]
    Resampling(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::MissingColumn(_)
            | Error::Row { .. }
            | Error::Validation(_)
            | Error::NoEvents(_)
            | Error::Csv(_)
            | Error::Io(_) => ErrorKind::Input,
            Error::Degenerate(_) | Error::Resampling(_) => ErrorKind::Inference,
            Error::Singular(_) | Error::NonConvergence(_) => ErrorKind::Em,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
