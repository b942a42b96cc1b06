use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: record {record}: {message}")]
    Parse {
        file: String,
        record: usize,
        message: String,
    },

    #[error("invalid NACE code {0:?}")]
    InvalidNaceCode(String),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("{0} is not valid UTF-8")]
    InvalidEncoding(PathBuf),

    #[error("document text is empty")]
    EmptyText,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("embedding provider failed after {attempts} attempt(s): {message}")]
    Embedding { attempts: u32, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedder mismatch: index built with {index:?}, query uses {provider:?}")]
    EmbedderMismatch { index: String, provider: String },

    #[error("cannot embed {0:?}: no tokens produce a non-zero vector")]
    ZeroVector(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("unparseable backend output after {attempts} attempt(s): {raw_output:?}")]
    Unparseable { attempts: u32, raw_output: String },

    #[error("prompt template {template_id:?}: {message}")]
    Template { template_id: String, message: String },

    #[error("unknown candidate {0:?}")]
    UnknownCandidate(String),

    #[error("annotator {annotator:?} already voted on candidate {candidate:?}")]
    DuplicateVote { candidate: String, annotator: String },

    #[error("candidate {0:?} is already finalized")]
    CandidateFinalized(String),

    #[error("{} candidate(s) still pending: {}", .0.len(), .0.join(", "))]
    PendingCandidates(Vec<String>),

    #[error("no taxonomy activities selected for the given NACE codes")]
    EmptySelection,

    #[error("project has no documents")]
    NoDocuments,

    #[error("store schema {found:?} is not supported (expected {expected:?})")]
    SchemaVersion { found: String, expected: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl std::fmt::Display, record: usize, message: impl ToString) -> Self {
        Error::Parse {
            file: file.to_string(),
            record,
            message: message.to_string(),
        }
    }
}
