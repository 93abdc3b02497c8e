use thiserror::Error;

/// Errors produced anywhere in the MNE pipeline.
#[derive(Debug, Error)]
pub enum MneError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("capacity error: need {needed}, have {available}")]
    Capacity { needed: usize, available: usize },

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("state error: {0}")]
    State(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MneError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        MneError::Shape(msg.into())
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        MneError::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, MneError>;
