use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("audio too short: need at least {needed} samples, got {got}")]
    AudioTooShort { needed: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },

    #[error("unknown transform kind: {0}")]
    UnknownTransform(String),

    #[error("carrier capacity exceeded: need {needed} cells, only {available} in band")]
    CapacityExceeded { needed: usize, available: usize },

    #[error("payload field out of range: {0}")]
    PayloadRange(String),

    #[error("non-finite numeric parameter: {0}")]
    NonFinite(String),

    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
