//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by configuration validation and numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is invalid. The message names the offending field.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical operation failed (e.g. a factorization of a matrix that
    /// should have been positive definite).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// File output failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
