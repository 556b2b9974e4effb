use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid defender spec: {0}")]
    InvalidDefenderSpec(String),

    #[error("action does not belong to this instance: {0}")]
    InstanceMismatch(String),

    #[error("enumeration overflow: more than {cap} {what} actions")]
    EnumerationOverflow { what: &'static str, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("every slot of the action mask is disabled")]
    EmptyMask,

    #[error("action visits a masked child at step {step}")]
    Inconsistent { step: usize },

    #[error("defender depth {depth} out of range for {num_defenders} defenders")]
    DepthOutOfRange { depth: usize, num_defenders: usize },

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },

    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),

    #[error("graph file line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
