use thiserror::Error;

/// Errors raised by the quantization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the domain {domain}")]
    Domain { point: Vec<f64>, domain: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unknown catalog entry `{0}`")]
    UnknownName(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("tolerance {tol:e} not met (error estimate {achieved:e}, best estimate {estimate})")]
    ToleranceNotMet {
        estimate: f64,
        achieved: f64,
        tol: f64,
    },

    #[error("fixed point iteration did not converge: {0}")]
    Convergence(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("moment appears to diverge: estimate grew from {small} (N) to {large} (2N)")]
    MomentDivergence { small: f64, large: f64 },

    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;
