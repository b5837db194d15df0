use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("syntax error at token {token} (offset {offset}): {message}")]
    Syntax {
        token: usize,
        offset: usize,
        message: String,
    },

    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("execution error: {0}")]
    Execution(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CF admission rejected: {requested} workers requested, {running} running, cap {cap}")]
    CfCapExceeded {
        requested: usize,
        running: usize,
        cap: usize,
    },

    #[error("simulation invariant violated: {0}")]
    Invariant(String),

    #[error("{path}:{line}: {message}")]
    Trace {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Load {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for errors a client caused by sending a bad query.
    pub fn is_query_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax { .. } | Error::Semantic(_) | Error::NotFound(_)
        )
    }
}
