use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("design is rank deficient (|r_{index}{index}| = {value:e} below relative threshold)")]
    RankDeficient { index: usize, value: f64 },

    #[error("one-sided Jacobi SVD did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid sketch counts: {0}")]
    InvalidCounts(String),

    #[error("row {row} has leverage {leverage} >= 1 - 1e-10; leave-one-out fit is undefined")]
    LeverageOne { row: usize, leverage: f64 },

    #[error("sketched design lost rank (sigma_min / sigma_max = {ratio:e}); increase r1")]
    SketchRankDeficient { ratio: f64 },

    #[error("histogram range is degenerate (pooled min = max = {0})")]
    DegenerateRange(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: missing required columns: {}", missing.join(", "))]
    Schema { path: PathBuf, missing: Vec<String> },

    #[error("problem carries no ground truth (corruption mask / coefficients)")]
    MissingTruth,

    #[error("problem has no corrupted rows; corrupted-vs-clean histograms are undefined")]
    MissingCorrupted,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration rather than data.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParams(_) | Error::InvalidCounts(_))
    }
}
