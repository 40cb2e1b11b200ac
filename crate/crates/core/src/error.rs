//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Index or shape mismatch between parameters and data.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Data violates a model invariant.
    #[error("invalid data: {0}")]
    Invalid(String),

    /// Parameters describe a nonstationary (explosive) process.
    #[error("nonstationary parameters: {0}")]
    Unstable(String),

    /// A file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input (config, data, dimensions) as
    /// opposed to runtime failures like I/O. The CLI maps validation errors
    /// to exit code 1 and runtime failures to exit code 2.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
