use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("segment id {id} out of range for {num_segments} segments")]
    SegmentIdOutOfRange { id: usize, num_segments: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown parameter {0}")]
    UnknownParam(String),

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss at step {step}: {diagnostics}")]
    NonFiniteLoss { step: u64, diagnostics: String },

    #[error("empty graph: {0}")]
    EmptyGraph(&'static str),

    #[error("edge substitution impossible: {0}")]
    Substitution(String),

    #[error("edit distance oracle limited to graphs with at most {max} nodes, got {got}")]
    OracleTooLarge { max: usize, got: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metric requires both positive and negative scores")]
    SingleClass,

    #[error("{0} requires non-empty input")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
