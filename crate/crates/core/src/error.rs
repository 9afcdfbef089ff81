use thiserror::Error;

/// Errors produced by the quantization, modelling and coding layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input")]
    InvalidInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dictionary too large")]
    DictionaryTooLarge,
    #[error("empty support")]
    EmptySupport,
    #[error("integration failed")]
    IntegrationFailed,
    #[error("code {code} out of range for a table of {size} entries")]
    CodeOutOfRange { code: u32, size: usize },
    #[error("model mismatch")]
    ModelMismatch,
    #[error("underflow")]
    Underflow,
    #[error("corrupt payload")]
    CorruptPayload,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version")]
    UnsupportedVersion,
    #[error("truncated stream")]
    Truncated,
    #[error("non-monotone map")]
    NonMonotone,
    #[error("degenerate")]
    Degenerate,
    #[error("non-overlapping quality ranges")]
    NoOverlap,
    #[error("empty simulation")]
    EmptySimulation,
}

pub type Result<T> = std::result::Result<T, Error>;
