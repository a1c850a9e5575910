use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value produced at node `{node}`")]
    Numeric { node: String },

    #[error("state error: {0}")]
    State(String),

    #[error("build error: {0}")]
    Build(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt archive: {0}")]
    Corrupt(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Diverged { epoch: usize, batch: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
