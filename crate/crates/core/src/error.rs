use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the qtewma core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid training set: {0}")]
    InvalidTraining(String),

    #[error("degenerate cut along dimension {dim}: repeated coordinate value {value} at the split (add jitter to the input)")]
    DegenerateCut { dim: usize, value: f64 },

    #[error("shape mismatch: expected {expected} components, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("threshold table does not match detector: {0}")]
    CalibrationMismatch(String),

    #[error("monitoring halted: change already detected at t={0}")]
    MonitoringHalted(u64),

    #[error("polynomial fit failed: {0}")]
    Fit(String),

    #[error("simulation needs {needed} bytes of path storage, budget is {budget} bytes (enable streaming mode)")]
    MemoryBudget { needed: u64, budget: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("column {column} has zero variance and cannot be standardized")]
    ZeroVariance { column: usize },

    #[error("data source exhausted: needed {needed} samples, only {available} available")]
    Exhausted { needed: usize, available: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
