use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {left} cells (M = {left_bound}) vs {right} cells (M = {right_bound})")]
    GridMismatch {
        left: usize,
        right: usize,
        left_bound: f64,
        right_bound: f64,
    },

    #[error("density value {value} at cell {cell} outside [1/M, M] with M = {bound}")]
    OutOfBounds { cell: usize, value: f64, bound: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("could not generate a class member after {attempts} attempts: {reason}")]
    GenerationFailure { attempts: usize, reason: String },

    #[error("rate fit failed: {0}")]
    FitFailure(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
