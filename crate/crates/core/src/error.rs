use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank-deficient design: columns {columns:?} are collinear with earlier columns")]
    RankDeficient { columns: Vec<usize> },

    #[error("design column {0} is identically zero")]
    ZeroColumn(usize),

    #[error(
        "AR coefficients are not stationary (companion spectral radius {spectral_radius:.4}); \
         estimate the error variance from the sample variance of the residuals instead"
    )]
    NonStationary { spectral_radius: f64 },

    #[error("cross-validation failed: {0}")]
    CrossValidation(String),

    #[error("too many failed replications in cell: {failed} of {total} excluded")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
