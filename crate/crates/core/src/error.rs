//! Error types shared across the crate.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A configuration value or argument is out of its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input is degenerate for the requested operation (zero vector, empty
    /// class, duplicate ids, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A NaN or infinity was found where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A file does not match its declared schema.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),

    /// Training produced a non-finite loss; the message names the step.
    #[error("training failed: {0}")]
    Training(String),

    /// Sampling produced a non-finite state; the message names the step.
    #[error("sampling failed: {0}")]
    Sampling(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
