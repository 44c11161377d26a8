//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by geometry, raster, loss, and I/O operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter was outside its documented range.
    #[error("parameter out of range: {0}")]
    Parameter(String),

    /// A polygon had too few vertices, non-finite coordinates, or zero area
    /// where a proper region was required.
    #[error("degenerate polygon: {0}")]
    Degenerate(String),

    /// Tensor or mask shapes did not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A referenced region label does not exist.
    #[error("unknown region label {0}")]
    UnknownLabel(u32),

    /// Malformed text input; `line` is 1-based.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Binary payload did not start with the expected magic bytes.
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    /// Binary payload declared an unsupported version.
    #[error("unsupported version {0}")]
    BadVersion(u32),

    /// Binary payload was shorter or longer than its header promised.
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    PayloadLength { expected: usize, found: usize },

    /// Recognized container but unsupported variant (e.g. ASCII PGM).
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
