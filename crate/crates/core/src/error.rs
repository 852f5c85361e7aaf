use thiserror::Error;

use crate::graph::GraphError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{field} index {value} outside vocabulary of size {size}")]
    VocabOutOfRange {
        field: &'static str,
        value: usize,
        size: usize,
    },
    #[error("line graph view {graph} does not match its source graph")]
    ViewMismatch { graph: usize },
    #[error("graph {graph} has no nodes")]
    EmptyGraph { graph: usize },
    #[error("batch of {graphs} graphs is too small; need at least {needed}")]
    BatchTooSmall { graphs: usize, needed: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("non-finite loss at step {step}")]
    NonFiniteAtStep { step: u64 },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    InvariantViolation { line: usize, source: GraphError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
