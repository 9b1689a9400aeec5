use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("label {label} outside domain {domain}")]
    Label { label: i64, domain: String },

    #[error("class missing: {0}")]
    ClassMissing(String),

    #[error("invalid class index pair ({i}, {j})")]
    Index { i: usize, j: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value at step {step}: {what}")]
    Numeric { step: u64, what: String },

    #[error("estimator not ready: {0}")]
    EstimatorNotReady(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
