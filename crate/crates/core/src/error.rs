use thiserror::Error;

/// Errors surfaced by the models and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A Gram matrix stayed indefinite after the full jitter escalation
    /// schedule, or an intermediate factorization broke down.
    #[error("numerical conditioning failure: {0}")]
    Conditioning(String),

    #[error("safe-start sampling exhausted after {0} consecutive rejections")]
    SafeStartExhausted(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
