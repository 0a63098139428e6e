use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("row {row} of the attention mask has no unmasked entry")]
    DegenerateRow { row: usize },

    #[error("variable does not belong to this tape")]
    NotOnTape,

    #[error("backward requires a single-element output, got {len} elements")]
    NotScalar { len: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("token id {id} is outside the vocabulary of size {vocab_size}")]
    OutOfVocabulary { id: u32, vocab_size: usize },

    #[error("malformed special-token layout: {0}")]
    Layout(String),

    #[error("alignment failure for instance {id}: {reason}")]
    Alignment { id: String, reason: String },

    #[error("knowledge graph cannot support the request: {0}")]
    InsufficientGraph(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("integrated gradients produced a non-finite gradient at step {step}")]
    AttributionStep { step: usize },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corruption(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
