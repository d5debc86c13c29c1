use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("annotation error for `{id}`: {reason}")]
    Annotation { id: String, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("codec error: {0}")]
    Codec(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("occluder bank error: {0}")]
    Bank(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("intra-class distance is zero; separability undefined")]
    DegenerateIntraClass,

    #[error("rank deficient: need rank {needed}, found {found}")]
    Rank { needed: usize, found: usize },

    #[error("size error: {0}")]
    Size(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("while processing `{context}`: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the id of the item being processed.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any `Context` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
