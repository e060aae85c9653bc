use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument was outside its valid domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Not enough rows to support the requested number of OLS fits.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Matrix/vector shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// R² is undefined when every label is identical.
    #[error("R² is undefined: labels have zero variance")]
    UndefinedScore,

    /// The region to sample from has zero volume.
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("unsupported dimension {0} (only d = 2 is supported)")]
    UnsupportedDimension(usize),

    /// A data row violates the bounds supplied to a bounded estimator.
    #[error("bound violation at row {row}: {detail}")]
    BoundViolation { row: usize, detail: String },

    /// CSV ingestion failure. `row` is 1-based and counts the header as row 1.
    #[error("{path}: {message}")]
    Ingestion { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
