use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Validation,
    Fit,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("row sums to {sum} (expected 1 within {tolerance})")]
    RowSum { sum: f64, tolerance: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no training samples for class(es): {}", .0.join(", "))]
    EmptyClasses(Vec<String>),

    #[error("cross-tab needs exactly 2 base models, got {0}; use per-model evaluation reports instead")]
    UnsupportedArity(usize),

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: unsupported format {found:?} (expected {expected:?})")]
    VersionMismatch { path: PathBuf, found: String, expected: String },

    #[error("{path}: line {line}: duplicate row for sample {sample:?}, crop {crop}, model {model}")]
    DuplicateRow { path: PathBuf, line: u64, sample: String, crop: u32, model: usize },

    #[error("{path}: missing model row {model} for sample {sample:?}, crop {crop}")]
    MissingModelRow { path: PathBuf, sample: String, crop: u32, model: usize },

    #[error("{path}: line {line}: probabilities sum to {sum} (expected 1 within {tolerance})")]
    RowSumAt { path: PathBuf, line: u64, sum: f64, tolerance: f64 },

    #[error("{path}: line {line}: expected {expected} class probabilities, found {found}")]
    ClassCount { path: PathBuf, line: u64, expected: usize, found: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::VersionMismatch { .. }
            | Error::ClassCount { .. } => ErrorKind::Parse,
            Error::EmptyClasses(_) => ErrorKind::Fit,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
