use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("matrix is singular (smallest singular value {rho_min:.3e}) in {context}")]
    Singular { context: String, rho_min: f64 },

    #[error("matrix exponential out of range: t*lambda = {0:.3e} exceeds 700")]
    ExpOverflow(f64),

    #[error("iteration diverged after {iterations} steps (norm {norm:.3e})")]
    Diverged {
        iterations: usize,
        norm: f64,
        last: Vec<f64>,
    },

    #[error("no convergence within {0} iterations")]
    MaxIterations(usize),

    #[error("empty sub-level set: no grid point with |grad L1| <= {c:.3e}; enlarge c or the region")]
    EmptySublevelSet { c: f64 },

    #[error("degenerate pair: {0}")]
    Degenerate(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
