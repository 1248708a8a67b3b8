use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value {value} at grid point {point:?}")]
    Sampling { point: Vec<f64>, value: f64 },

    #[error("state is not normalized (norm² = {0})")]
    Normalization(f64),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("shift {0:?} is not an integer multiple of the grid spacing; use an AnalyticState")]
    UnsupportedShift(Vec<f64>),

    #[error("matrix has determinant {0}, expected 1")]
    NotSpecial(f64),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("regions overlap: components {0} and {1}")]
    Overlap(usize, usize),

    #[error("region not covered by the grid box: {0}")]
    Coverage(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("hamiltonian kind error: {0}")]
    Kind(String),

    #[error("inconsistent energy: {0}")]
    Inconsistent(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
