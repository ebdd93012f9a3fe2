use thiserror::Error;

/// Coarse classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Estimation,
    Bootstrap,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("eigenvalue iteration did not converge after {iterations} iterations (best estimate {best})")]
    NotConverged { best: f64, iterations: usize },

    #[error("model is not invertible: companion spectral radius {rho} >= 1")]
    NonInvertible { rho: f64 },

    #[error("singular system: smallest pivot magnitude {pivot:e}")]
    Singular { pivot: f64 },

    #[error("matrix is not positive semi-definite: residual magnitude {magnitude:e}")]
    NotPsd { magnitude: f64 },

    #[error("stationarity correction failed: spectral radius still {rho} after {rounds} rounds")]
    CorrectionFailed { rho: f64, rounds: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("bootstrap replicate {replicate} (seed {seed}) failed: {reason}")]
    Replicate {
        replicate: usize,
        seed: u64,
        reason: String,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Shape(_) | Error::NonFinite { .. } | Error::Config(_) | Error::Input(_) => {
                ErrorClass::Input
            }
            Error::NonInvertible { .. }
            | Error::Singular { .. }
            | Error::CorrectionFailed { .. }
            | Error::Estimation(_) => ErrorClass::Estimation,
            Error::Replicate { .. } => ErrorClass::Bootstrap,
            Error::NotConverged { .. } | Error::NotPsd { .. } => ErrorClass::Internal,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
