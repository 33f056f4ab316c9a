use thiserror::Error;

use crate::problem::ProblemKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid solution: {0}")]
    InvalidSolution(String),

    #[error(
        "instance too large for exhaustive search: {kind} with {size} elements (limit {limit})"
    )]
    SizeLimit {
        kind: ProblemKind,
        size: usize,
        limit: usize,
    },

    #[error("TSPLIB parse error: {0}")]
    Parse(String),

    #[error("unsupported edge weight type `{0}` (only EUC_2D is supported)")]
    UnsupportedEdgeWeight(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("invalid heuristic: {0}")]
    InvalidHeuristic(String),

    #[error("undefined autocorrelation: {0}")]
    UndefinedAutocorrelation(String),

    #[error("undefined correlation length: {0}")]
    UndefinedCorrelationLength(String),

    #[error("infinite correlation length (|r1| = 1)")]
    InfiniteCorrelationLength,
}
