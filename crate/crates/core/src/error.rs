use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("class {class} is out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("stratification impossible: class {0} has no instances")]
    EmptyClass(usize),

    #[error("no visible labels to train on")]
    NoVisibleLabels,

    #[error("label state not allowed here: {0}")]
    LabelState(String),

    #[error("operation requires a binary problem, found {0} classes")]
    NotBinary(usize),

    #[error("not enough instances: need {needed}, have {available}")]
    InsufficientInstances { needed: usize, available: usize },

    #[error("covariance matrix for class {0} is not positive definite")]
    NotPositiveDefinite(usize),

    #[error("degenerate noise thresholds: lower bound {lower} <= upper bound {upper}")]
    DegenerateThresholds { lower: f64, upper: f64 },

    #[error("csv error at line {line}: {message}")]
    CsvFormat { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
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
    /// Errors caused by bad inputs rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::DegenerateThresholds { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
