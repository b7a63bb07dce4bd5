use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The leapfrog trajectory left the finite region or its energy error
    /// exceeded the divergence threshold. `step` is 1-based.
    #[error("divergent trajectory at leapfrog step {step}")]
    Divergence { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("batch distribution is empty")]
    EmptyDistribution,

    #[error("effective sample size undefined: {0}")]
    UndefinedEss(&'static str),

    #[error("step-size adaptation failed: {0}")]
    AdaptationFailed(String),

    #[error("trajectory cache exceeded {0} points")]
    CacheOverflow(usize),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("column {column} ('{name}') is constant and cannot be standardized")]
    ConstantColumn { column: usize, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::NonFinite(_))
    }
}
