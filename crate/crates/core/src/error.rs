//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by problem construction, solvers, model fitting and the
/// trust-region driver.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or data (violated preconditions, out-of-box points).
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite values or diverging iterations.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Interpolation set too ill-conditioned to fit a model.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A lower-level solve could not certify the requested accuracy.
    #[error("certification failure: {0}")]
    Certification(String),

    /// File or serialization problem in the experiment harness.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed configuration or on-disk artifact.
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub fn certification(msg: impl Into<String>) -> Self {
        Error::Certification(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
