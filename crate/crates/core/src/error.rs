use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value {value} at {location}")]
    NonFinite { location: String, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("conjugate construction refused: relative curl residual {residual:.3e} exceeds bound {bound:.3e}")]
    CurlResidual { residual: f64, bound: f64 },

    #[error("v <= 0 at {count} node(s) of the region of interest, first offending nodes {nodes:?}")]
    NonPositive { count: usize, nodes: Vec<(usize, usize)> },

    #[error("gradient pinch violated at node ({i}, {j}): |grad u - e2| = {value:.4} > {delta}")]
    PinchViolated { i: usize, j: usize, value: f64, delta: f64 },

    #[error("level-set corrector failed to converge near ({x:.6}, {y:.6})")]
    CorrectorFailed { x: f64, y: f64 },

    #[error("linear system is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("validation error at {pointer}: {msg}")]
    Validation { pointer: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
