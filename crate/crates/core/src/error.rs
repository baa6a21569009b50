use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value, detected before any simulation starts.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Caller broke a documented precondition (shape mismatch, empty input).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Non-finite simulator output reached the state encoder.
    #[error("encoding error: {0}")]
    Encoding(String),
    /// Recorded artifact disagrees with a re-simulation.
    #[error("integrity error in episode {episode} at tick {tick}: {detail}")]
    Integrity {
        episode: u64,
        tick: u64,
        detail: String,
    },
    /// Command-line misuse.
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Integrity { .. } => 4,
            _ => 2,
        }
    }
}
