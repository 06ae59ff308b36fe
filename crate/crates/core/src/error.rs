use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spin quantum number {0}: 2s must be a non-negative integer")]
    InvalidSpin(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("matrix is not Hermitian (max |H - H†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("requested {what} = {value} outside the tabulated range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("dimension {dim} exceeds the Lie-rank cost guard ({limit}); pass `allow_large = true` to override")]
    DimensionGuard { dim: usize, limit: usize },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("spectrum is already a first derivative")]
    AlreadyDerivative,
    /// Carries the best parameter vector reached before giving up.
    #[error("fit did not converge after {iterations} iterations: {diagnostic}")]
    NotConverged { iterations: usize, best: Vec<f64>, diagnostic: String },
}

pub type Result<T> = std::result::Result<T, Error>;
