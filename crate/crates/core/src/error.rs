use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("block index {index} out of range for {num_blocks} blocks")]
    BlockOutOfRange { index: usize, num_blocks: usize },

    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid block weights: {0}")]
    InvalidWeights(String),

    #[error("delay tail diverges: partial sum of c0 reached {partial:e} after {terms} terms")]
    DivergentTail { partial: f64, terms: usize },

    #[error("infeasible step size: {0}")]
    InfeasibleStep(String),

    #[error("insufficient history: iterate {requested} requested, oldest kept is {oldest}")]
    InsufficientHistory { requested: usize, oldest: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("configuration mismatch: {0}")]
    Mismatch(String),

    #[error("worker {worker} panicked after {completed} completed updates: {message}")]
    WorkerPanic {
        worker: usize,
        message: String,
        completed: usize,
        partial: Box<crate::parallel::MeasuredTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
