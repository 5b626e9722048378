use thiserror::Error;

/// Library-wide error type.
///
/// Configuration problems are rejected before a run starts; invalid inputs
/// are rejected by the operation they were passed to. `AssertionFailed` only
/// arises while a federation run executes with assertions enabled, and it
/// names the offending client and iteration.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("runtime assertion failed at client {client}, iteration {t}: {detail}")]
    AssertionFailed {
        client: usize,
        t: u64,
        detail: String,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
