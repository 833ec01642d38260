use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate document id \"{0}\"")]
    DuplicateId(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("entity \"{0}\" is not in the vocabulary")]
    UnknownEntity(String),

    #[error("unknown document id \"{0}\"")]
    UnknownDocument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("candidate set is empty after filtering; try a larger alpha or an earlier t_min")]
    EmptyCandidateSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("topic count {topics} exceeds vocabulary size {vocabulary}")]
    TooManyTopics { topics: usize, vocabulary: usize },

    #[error("objective is not finite ({0})")]
    NonFiniteObjective(f64),

    #[error("every optimizer restart aborted")]
    AllRestartsFailed,

    #[error("chain has {0} documents, at least 3 are required")]
    ChainTooShort(usize),

    #[error("k-means produced an empty cluster after re-seeding")]
    EmptyCluster,

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad inputs or settings rather than by a computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::DuplicateId(_)
                | Error::EmptyCorpus
                | Error::UnknownEntity(_)
                | Error::UnknownDocument(_)
                | Error::InvalidConfig(_)
                | Error::TooManyTopics { .. }
                | Error::Json(_)
        )
    }
}
