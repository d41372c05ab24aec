use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: a simplex needs at least 2 coordinates")]
    InvalidDimension(usize),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not a probability vector: {0}")]
    NotOnSimplex(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gradient of {entropy} is unbounded at boundary coordinate {index}")]
    BoundaryGradient { entropy: String, index: usize },

    #[error("infinite loss: prediction assigns zero mass to outcome {outcome}")]
    InfiniteLoss { outcome: usize },

    #[error("numerical failure in {context} (best value found: {best})")]
    NumericalFailure { context: String, best: f64 },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("mixability constant is zero; regret bound undefined for {0}")]
    UndefinedRegret(String),
}

pub type Result<T> = std::result::Result<T, Error>;
