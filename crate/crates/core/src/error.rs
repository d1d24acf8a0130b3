use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column '{column}': '{value}' is not a finite real")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("response column '{0}' not found in header")]
    MissingColumn(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("observation {0} appears in every resample; jackknife-after-bootstrap is undefined")]
    NeverOmitted(usize),

    #[error("empirical variance is zero at test point {0}")]
    ZeroEmpiricalVariance(usize),

    #[error("unknown simulation '{name}' (valid: {valid})")]
    UnknownSimulation { name: String, valid: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
