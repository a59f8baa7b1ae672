//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by library operations.
///
/// The variants map onto the process exit codes used by the CLI:
/// configuration problems are user errors (exit 2), shape/parse/I/O
/// problems are data errors (exit 3). Unmet requirements and dead models
/// are *not* errors — they are reported through [`crate::trainer::TrainReport`]
/// flags so that reports and weights can still be written.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameters (bad counts, empty inputs, …).
    #[error("configuration error: {0}")]
    Config(String),

    /// An input had the wrong dimensions.
    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    /// A structured text input could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An underlying I/O operation failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor for configuration errors.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Convenience constructor for parse errors.
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Convenience constructor for shape errors.
    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            got: got.into(),
        }
    }
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
