use thiserror::Error;

pub type Result<T, E = PgsError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PgsError {
    /// Malformed image bytes. `offset` is the byte position where decoding stopped.
    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite input: {0}")]
    NumericInput(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at step {step}: {diagnostic}")]
    Diverged { step: usize, diagnostic: String },
}

impl PgsError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        PgsError::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        PgsError::Shape(msg.into())
    }
}
