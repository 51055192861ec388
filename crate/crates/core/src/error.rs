use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unknown {kind} '{name}' (known: {})", known.join(", "))]
    UnknownName {
        kind: &'static str,
        name: String,
        known: Vec<String>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("sample {index} has no label")]
    MissingLabel { index: usize },

    #[error("{}: row {row}, column {column}: {message}", file.display())]
    Parse {
        file: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{}: row {row}, column {column}: negative probability {value}", file.display())]
    NegativeProbability {
        file: PathBuf,
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("{}: row {row}, column {column}: non-finite value", file.display())]
    NonFinite {
        file: PathBuf,
        row: usize,
        column: usize,
    },

    #[error("{}: row {row}, column {column}: label {label} out of range for K = {classes}", file.display())]
    LabelOutOfRange {
        file: PathBuf,
        row: usize,
        column: usize,
        label: i64,
        classes: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::UnknownName { .. } | Error::Config(_) => {
                ErrorClass::Config
            }
            Error::DimensionMismatch { .. }
            | Error::MissingLabel { .. }
            | Error::Parse { .. }
            | Error::NegativeProbability { .. }
            | Error::NonFinite { .. }
            | Error::LabelOutOfRange { .. }
            | Error::Io { .. } => ErrorClass::Data,
            Error::Invariant(_) => ErrorClass::Internal,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
