use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({row}, {col}) out of bounds for {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("duplicate edge ({row}, {col})")]
    DuplicateEdge { row: usize, col: usize },
    #[error("negative weight {weight} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, weight: f64 },
    #[error("non-finite weight at ({row}, {col})")]
    NonFiniteWeight { row: usize, col: usize },

    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),
    #[error("bad split ratios {0:?}: must be positive and sum to 1")]
    BadRatios([f64; 3]),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty attention neighborhood")]
    EmptyNeighborhood,
    #[error("contrastive batch needs at least 2 distinct nodes, got {0}")]
    BatchTooSmall(usize),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("gradient check failed for blocks: {0:?}")]
    GradCheckFailure(Vec<String>),

    #[error("AUC needs at least one positive and one negative label")]
    DegenerateLabels,
    #[error("SVD did not converge after {0} iterations")]
    ConvergenceFailure(usize),

    #[error("checkpoint mismatch: checkpoint has {checkpoint}, dataset has {dataset}")]
    CheckpointMismatch { checkpoint: String, dataset: String },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
