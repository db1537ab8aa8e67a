//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by the pipeline, classified by what went wrong rather
/// than where. The CLI maps these onto stable exit codes.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A record in an input stream could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Inputs are individually well-formed but mutually inconsistent
    /// (duplicate ids, unknown references, out-of-range positions).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A configuration value or combination is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// A binary or structured file does not match its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// File contents are structurally valid but carry bad values.
    #[error("data error: {0}")]
    Data(String),

    /// A requested id is not present.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Caller violated an API precondition (shape mismatch, index range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Optimization failed (non-finite loss or gradient).
    #[error("training error: {0}")]
    Training(String),

    /// A statistical fit could not be performed.
    #[error("fit error: {0}")]
    Fit(String),

    /// The embedder service could not be reached after retries.
    #[error("transport error: {0}")]
    Transport(String),

    /// The embedder service replied with something off-contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// I/O failure, with the offending path attached.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
