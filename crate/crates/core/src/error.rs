use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GffError>;

#[derive(Debug, Error)]
pub enum GffError {
    /// Edge endpoint or node index outside the graph.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A node degree does not fit the one-hot width.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {file} line {line}: {msg}")]
    Format {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("stratification error: {0}")]
    Stratification(String),

    /// Non-finite loss or gradient during training.
    #[error("training diverged: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("contract violation: {0}")]
    Contract(String),
}

impl GffError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GffError::Io {
            path: path.into(),
            source,
        }
    }
}
