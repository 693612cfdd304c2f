use thiserror::Error;

use crate::partitions::Partition;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid partition {0:?}: parts must be weakly decreasing and positive")]
    InvalidPartition(Vec<u32>),

    #[error("lowering index {index} out of range for partition of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("partition {partition} has length {len} > k = {k}")]
    PartitionTooLong { partition: Partition, len: usize, k: usize },

    #[error("polynomial is not symmetric (mismatch at exponent {0})")]
    NotSymmetric(Partition),

    #[error("degree {degree} exceeds the configured cap {cap}")]
    DegreeCap { degree: u32, cap: u32 },

    #[error("theta must be positive and finite, got {0}")]
    InvalidTheta(f64),

    #[error("degenerate theta {theta}: eig({kappa}) and eig({mu}) differ by {gap:e}")]
    DegenerateTheta {
        theta: f64,
        kappa: Partition,
        mu: Partition,
        gap: f64,
    },

    #[error("Jack basis does not span the polynomial: leading monomial {0} is not indexed")]
    BasisDoesNotSpan(Partition),

    #[error("partition {0} is not indexed by this basis")]
    Unindexed(Partition),

    #[error("ordered vector is not weakly increasing at position {0}")]
    NotOrdered(usize),

    #[error("tie in top-level points at positions {0} and {1}")]
    TiedLevels(usize, usize),

    #[error("root bracketing failed in gap {gap} ({lo}, {hi})")]
    RootBracket { gap: usize, lo: f64, hi: f64 },

    #[error("non-finite state at step {0}")]
    NonFinite(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),
}

pub type Result<T> = std::result::Result<T, Error>;
