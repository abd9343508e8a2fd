//! Error type shared across the crate.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced a non-finite or otherwise unusable value
    /// (singular system, negative denominator, large imaginary residue).
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// A filter column cannot be updated (zero steering vector or
    /// vanishing scalar coefficient); callers usually keep the previous
    /// column and continue.
    #[error("degenerate stream: {0}")]
    DegenerateStream(String),

    /// Configuration-text parsing failure; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
