//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a precondition (non-normalized state, bad range, ...).
    #[error("validation: {0}")]
    Validation(String),
    /// Photon-number capacity exceeded (only one- and two-photon states are supported).
    #[error("capacity: {0}")]
    Capacity(String),
    /// Inconsistent wiring: undeclared path, unknown element kind, bad port count.
    #[error("configuration: {0}")]
    Configuration(String),
    /// An operation that only supports a subset of noise models was called with another.
    #[error("unsupported noise model: {0}")]
    UnsupportedModel(String),
    /// Conditioning on a zero-probability event.
    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),
    /// Not enough counts/data to reconstruct.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Config file schema violation. Messages keep the parser's line/column anchors.
    #[error("config schema: {0}")]
    Schema(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
