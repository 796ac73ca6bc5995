use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed field `{field}`: {message}")]
    Malformed {
        line: u64,
        field: String,
        message: String,
    },

    #[error("line {line}: invalid record: {message}")]
    Validation { line: u64, message: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("trace lacks prompt grouping")]
    NoPromptGrouping,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no records for task type `{0}`")]
    NoRecords(String),

    #[error("request {index} cannot fit: {tokens} tokens exceed KV capacity {capacity}")]
    RequestCannotFit {
        index: usize,
        tokens: u64,
        capacity: u64,
    },

    #[error("{0}")]
    Simulation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by bad input data rather than by the model.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Malformed { .. }
                | Error::Validation { .. }
                | Error::MissingColumn(_)
                | Error::Json(_)
                | Error::NoRecords(_)
                | Error::NoPromptGrouping
                | Error::EmptyDistribution
        )
    }
}
