//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

use crate::scoring::Direction;

/// Errors raised while building or loading structured data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid entity {field}: {reason}")]
    InvalidEntity { field: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("invariant violated by record {record}: {reason}")]
    InvariantViolation { record: String, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        DataError::Io {
            path: path.into().display().to_string(),
            message: err.to_string(),
        }
    }

    pub(crate) fn parse(path: &str, line: usize, reason: impl Into<String>) -> Self {
        DataError::Parse {
            path: path.to_string(),
            line,
            reason: reason.into(),
        }
    }
}

/// Errors raised by QG/QA/embedding backends.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { attempts: u32, reason: String },

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operation not supported by backend {0}")]
    NotSupported(String),

    #[error("protocol error in field `{field}`: {reason}")]
    Protocol { field: String, reason: String },

    #[error("cache failure: {0}")]
    Cache(String),
}

/// Errors raised while scoring.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("text mode requires a reference")]
    MissingReference,

    #[error("{direction} pass failed: {source}")]
    Backend {
        direction: Direction,
        #[source]
        source: BackendError,
    },

    #[error(transparent)]
    Similarity(#[from] BackendError),

    #[error("invalid similarity strategy: {0}")]
    InvalidStrategy(String),
}

/// Errors raised by the meta-evaluation statistics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetaEvalError {
    #[error("vector lengths differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("at least one vector has zero variance")]
    DegenerateVariance,

    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("no metric score for {} rated output(s): {}", .missing.len(), .missing.join(", "))]
    Join { missing: Vec<String> },

    #[error("unknown rating dimension `{0}`")]
    UnknownDimension(String),
}

/// Errors raised by the persistent cache.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CacheError {
    #[error("entry {key} already stored with different content")]
    Consistency { key: String },

    #[error("corrupt cache entry {key}: {reason}")]
    StoreCorrupt { key: String, reason: String },

    #[error("cache i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CacheError {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        CacheError::Io {
            path: path.into().display().to_string(),
            message: err.to_string(),
        }
    }
}

/// Errors raised by the corpus builder.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("example {example_id}: {source}")]
    Backend {
        example_id: String,
        #[source]
        source: BackendError,
    },

    #[error("example {example_id} has no reference description")]
    MissingReference { example_id: String },

    #[error("field contains reserved token or separator: {0}")]
    ReservedToken(String),

    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
}

/// Top-level error for pipeline runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    MetaEval(#[from] MetaEvalError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{context}: {message}")]
    Pipeline { context: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
