use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error(
        "feature adjacency for covariate `{covariate}` has {nnz} non-zeros, exceeding the sparsity budget of {budget}"
    )]
    SparsityBudget {
        covariate: String,
        nnz: usize,
        budget: usize,
    },

    #[error("{what}: {got} exceeds the supported limit of {limit}")]
    Capacity {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("perfect separation in logistic fit: {0}")]
    Separation(String),

    #[error("design matrix is rank deficient: column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the numerics of a fit rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Separation(_) | Error::RankDeficient { .. } | Error::Numerical(_)
        )
    }
}
