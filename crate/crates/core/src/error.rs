//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or dataset dimensions do not line up. The message always
    /// carries both offending shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration value (hyperparameter, group size, fraction).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Numerical failure: singular matrix, NaN loss or gradient, failed
    /// spectral estimate.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// API misuse: empty batch, non-scalar loss, repeated backward pass.
    #[error("usage error: {0}")]
    Usage(String),

    /// Not enough usable samples to compute the requested quantity.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Malformed input data (CSV parse failures, non-finite cells).
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
