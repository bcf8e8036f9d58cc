use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid move: {0}")]
    InvalidMove(String),
    #[error("invalid density: {edges} edges requested but only {available} pairs available")]
    InvalidDensity { edges: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("singular fit: normal equations are not positive definite")]
    SingularFit,
    #[error("insufficient samples: n={n}, conditioning set size {cond}")]
    InsufficientSamples { n: usize, cond: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for {len} variables")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("degenerate overlap: covariance not positive definite after regularization")]
    DegenerateOverlap,
    #[error("degenerate regime {0}: fit failed after ridge retry")]
    DegenerateRegime(String),
    #[error("empty cover")]
    EmptyCover,
    #[error("outcome value {0} never observed")]
    UnobservedOutcome(usize),
    #[error("table is not normalized: {0}")]
    Unnormalized(String),
    #[error("malformed CI statement: {0}")]
    MalformedStatement(String),
    #[error("all regimes failed: {0}")]
    AllRegimesFailed(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
