use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("duplicate id: {0}")]
    Duplicate(String),

    #[error("degenerate tree: no leaf labels")]
    DegenerateTree,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("unknown label path: {0}")]
    UnknownLabel(String),

    #[error("sequence {id} too short: {len} bp, need {need} valid windows")]
    TooShort { id: String, len: usize, need: usize },

    #[error("missing abundance rows for: {}", .0.join(", "))]
    MissingAbundance(Vec<String>),

    #[error("missing embeddings for: {}", .0.join(", "))]
    MissingEmbedding(Vec<String>),

    #[error("missing ground truth for: {}", .0.join(", "))]
    MissingTruth(Vec<String>),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("empty dataset: {0}")]
    Empty(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("stale activation cache: {0}")]
    StaleCache(String),

    #[error("kernel construction failed: {0}")]
    Kernel(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("id sets differ: {0}")]
    Alignment(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Errors caused by bad user input rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Value(_))
    }
}
