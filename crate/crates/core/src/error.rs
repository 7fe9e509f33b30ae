//! Error type shared across the library.
//!
//! Errors carry human-readable context (field paths for configuration
//! problems, step/particle indices for runtime numeric failures) so that
//! CLI diagnostics can be printed without further lookup.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation
    /// (e.g. a grid index past the end of the schedule).
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects have incompatible dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is invalid. The message names the offending
    /// field path(s).
    #[error("config error: {0}")]
    Config(String),

    /// A numerical operation failed (non-finite values, a matrix that is
    /// not positive definite, a singular system).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// File I/O failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a domain error.
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Shorthand for a shape error.
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Shorthand for a config error.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Shorthand for a numeric error.
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
