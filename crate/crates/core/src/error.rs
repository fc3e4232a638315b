use thiserror::Error;

/// Errors raised by the post-processing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate LFSR: all-zero initial state")]
    ZeroLfsrState,

    #[error("LFSR degree {0} outside supported range 1..=128")]
    UnsupportedDegree(usize),

    #[error("connection polynomial is reducible")]
    ReduciblePolynomial,

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("key pool exhausted: requested {requested} bits, {available} available")]
    PoolExhausted { requested: usize, available: usize },

    #[error("exact oracle limited to {limit} positions, got {requested}")]
    OracleTooLarge { limit: u64, requested: u64 },

    #[error("malformed encoding: {0}")]
    Decode(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("protocol violation: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;
