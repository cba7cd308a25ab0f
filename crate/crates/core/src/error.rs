use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symplectic: (M^T J M - J)[{row}][{col}] = {value}")]
    NotSymplectic { row: usize, col: usize, value: i64 },

    #[error("generators {0} and {1} do not commute")]
    NonCommuting(usize, usize),

    #[error("not hyperbolic: {0}")]
    NotHyperbolic(String),

    #[error("reducible characteristic polynomial: factor {0}")]
    Reducible(String),

    #[error("defective joint eigenstructure: {0}")]
    Defective(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("residual {achieved:e} above tolerance {tol:e}")]
    ToleranceMiss { achieved: f64, tol: f64 },

    #[error("law violation: {0}")]
    LawViolation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integer overflow in exact arithmetic")]
    Overflow,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
