use thiserror::Error;

/// Errors produced by the design toolkit.
#[derive(Debug, Error)]
pub enum OedError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite kernel value for pair ({i}, {j})")]
    NonFiniteKernel { i: usize, j: usize },

    #[error("gram format error: {0}")]
    GramFormat(String),

    #[error("gram matrix asymmetric at ({i}, {j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig}, tolerance {tol})")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("degenerate subset: K_SS is numerically singular (offending index {index})")]
    DegenerateSubset { index: usize },

    #[error("degenerate pool: all remaining candidates were skipped, achieved design size {achieved} of {requested}")]
    DegeneratePool { achieved: usize, requested: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OedError>;
