use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SscError>;

#[derive(Debug, Error)]
pub enum SscError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("size error: need at least {min} points, got {got}")]
    Size { min: usize, got: usize },

    #[error("degenerate input: column {column} has norm {norm:e}")]
    Degenerate { column: usize, norm: f64 },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("invalid dictionary budget: {0}")]
    Budget(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("eigensolver did not converge within {iterations} iterations (n = {n})")]
    Numerical { iterations: usize, n: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("trial failed (dataset {dataset}, seed {seed}, trial {trial}): {source}")]
    Trial {
        dataset: String,
        seed: u64,
        trial: usize,
        #[source]
        source: Box<SscError>,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
