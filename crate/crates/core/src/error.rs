use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point ({x}, {y}) lies outside the unit square")]
    OutOfDomain { x: f64, y: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no quadrature rule of degree {0} (supported: 1..=10)")]
    UnsupportedDegree(usize),

    #[error("matrix is numerically singular (pivot {pivot})")]
    SingularMatrix { pivot: usize },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error(
        "saddle-point solve out of tolerance: |Du|_inf = {divergence:e}, |m'p| = {mean:e}"
    )]
    SolverQuality { divergence: f64, mean: f64 },

    #[error("non-finite solution at step {step} (t = {t}); last good time {last_good_t}")]
    Diverged { step: usize, t: f64, last_good_t: f64 },

    #[error("{0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
