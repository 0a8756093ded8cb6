use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("cannot parse `{value}` as a number at row {row}, column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("tree node has zero cover")]
    ZeroCover,

    #[error("exact Shapley enumeration supports at most {max} features, got {got}; use the sampled method")]
    TooManyFeatures { got: usize, max: usize },

    #[error("coordinate descent did not converge after {sweeps} sweeps")]
    NotConverged {
        sweeps: usize,
        intercept: f64,
        coefficients: Vec<f64>,
    },

    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(&'static str),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
}
