use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("unsupported instance format: {0}")]
    Unsupported(String),

    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("graph is disconnected: vertex {to} is unreachable from vertex {from}")]
    Disconnected { from: usize, to: usize },

    #[error("invalid instance: {0}")]
    Invalid(String),

    /// A guarded enumeration or materialization would exceed its cap.
    #[error("size limit exceeded: {0}")]
    TooLarge(String),

    #[error("LP solve failed: {0}")]
    Lp(String),
}

pub type Result<T> = std::result::Result<T, Error>;
