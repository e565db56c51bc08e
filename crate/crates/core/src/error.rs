use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("label {label} out of range for {num_classes} classes (row {row})")]
    LabelOutOfRange {
        row: usize,
        label: u32,
        num_classes: u32,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("index {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("index {index} out of range for pool of size {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("duplicate index {0} in query")]
    DuplicateIndex(usize),

    #[error("budget {budget} exceeds {available} unlabeled samples")]
    BudgetExceedsPool { budget: usize, available: usize },

    #[error("labeled set is empty")]
    EmptyLabeledSet,

    #[error("invalid probability row {row}: {reason}")]
    InvalidDistribution { row: usize, reason: String },

    #[error("degenerate embedding: zero-norm vector")]
    DegenerateEmbedding,

    #[error("svm needs at least two distinct classes")]
    SingleClass,

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("cycle {cycle} failed: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("curves do not share a budget grid")]
    MismatchedGrids,

    #[error("zero variance in input")]
    ZeroVariance,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
