use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyData,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("threshold carries no direction information (positive rate {rate})")]
    UninformativeThreshold { rate: f64 },
    #[error("band partition needs {needed} bands, cap is {cap}; use a larger eps at desk scale")]
    TooManyBands { needed: usize, cap: usize },
    #[error(
        "power iteration did not converge after {iters} iterations (rayleigh {rayleigh}, last change {last_change})"
    )]
    NoConvergence { iters: usize, rayleigh: f64, last_change: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
