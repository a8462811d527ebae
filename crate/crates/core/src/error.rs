use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scene has {available} distinct captions but {requested} were requested")]
    NotEnoughTemplates { requested: usize, available: usize },

    #[error("candidate caption is empty after stripping special tokens")]
    EmptyCandidate,

    #[error("reference caption is empty after stripping special tokens")]
    EmptyReference,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("no training pairs were provided")]
    EmptyPairs,

    #[error("unknown schema version {found} (expected {expected})")]
    UnknownSchemaVersion { found: u32, expected: u32 },

    #[error("malformed file {path}: {detail}")]
    MalformedFile { path: PathBuf, detail: String },

    #[error("checkpoint {path}: {detail}")]
    BadCheckpoint { path: PathBuf, detail: String },

    #[error("checkpoint vocabulary hash {found:016x} does not match expected {expected:016x}")]
    VocabularyMismatch { found: u64, expected: u64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
