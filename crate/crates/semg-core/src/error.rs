//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// File-level structural problem (bad header, bad magic bytes, truncation).
    #[error("format error: {0}")]
    Format(String),

    /// A cell or field failed to parse; `row` is 1-based and counts the header.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// Data violates a documented invariant (label range, length mismatch...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Tensor or layer shape disagreement.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Filter design rejected the requested response.
    #[error("filter design error: {0}")]
    FilterDesign(String),

    /// An operation was asked to consume more samples than exist.
    #[error("size error: {0}")]
    Size(String),

    /// Invalid model or run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A non-finite value appeared during a forward or backward pass.
    #[error("numeric error in {layer}: {msg}")]
    Numeric { layer: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
