use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DsError>;

#[derive(Debug, Error)]
pub enum DsError {
    /// Malformed arguments: wrong lengths, out-of-range indices, NaNs.
    #[error("invalid input: {0}")]
    Input(String),

    /// The request exceeds what a routine supports (size caps, missing flags).
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("corrupt trace {path}:{line}: {msg}")]
    CorruptTrace { path: PathBuf, line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl DsError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        DsError::Input(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        DsError::Unsupported(msg.into())
    }
}
