use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("matrix is not symmetric (entry ({row}, {col}) differs from its transpose)")]
    NotSymmetric { row: usize, col: usize },

    #[error("vector does not lie on the sum-zero hyperplane (sum = {sum:e})")]
    NotCentered { sum: f64 },

    #[error("noise level {sigma:e} is at or below the floor {floor:e}; use the AM estimator")]
    SigmaBelowFloor { sigma: f64, floor: f64 },

    #[error("operation requires a pairwise-comparison design")]
    NotPairwise,

    #[error("spectral initializer degenerate: leading eigenvalue {lambda1:e} is not positive")]
    SpectralDegenerate { lambda1: f64 },

    #[error("I/O error on {}", context.display())]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {}", context.display())]
    Json {
        context: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("CSV error in {}", context.display())]
    Csv {
        context: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed record: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
