use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the crate.
///
/// Variants fall into three classes (see [`ErrorClass`]) which front ends
/// map onto exit codes or HTTP statuses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero norm: cannot normalize a zero vector")]
    ZeroNorm,

    #[error("non-finite component at index {index}{}", .id.as_ref().map(|id| format!(" of '{id}'")).unwrap_or_default())]
    NonFinite { id: Option<String>, index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate step: update produced a zero vector under renormalization")]
    DegenerateStep,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corruption(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error class used by front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input values, configuration or references.
    Validation,
    /// Filesystem failures and malformed or corrupt files.
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Format(_) | Error::Corruption(_) | Error::Parse { .. } | Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
