//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("time {0} outside [0, 1]")]
    InvalidTime(f64),

    #[error("bridge variance vanishes at t = {0} with positive bridge noise")]
    SingularBridge(f64),

    #[error("score formula singular at t = {0} (requires t in [{1}, {2}])")]
    ScoreSingularity(f64, f64, f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("batch sizes differ: {0} vs {1}")]
    UnequalBatchSizes(usize, usize),

    #[error("assignment problem size {n} exceeds cap {cap}")]
    AssignmentTooLarge { n: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss {loss} at training step {step}: {detail}")]
    NonFiniteLoss {
        step: usize,
        loss: f64,
        detail: String,
    },

    #[error("non-finite state encountered at integration step {0}")]
    NonFiniteState(usize),

    #[error("degenerate particle ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("second-order terminal estimate requested across a diffusive step")]
    DiffusiveSecondOrder,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("atom index {index} out of range for {n_atoms} atoms")]
    AtomIndexOutOfRange { index: usize, n_atoms: usize },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
