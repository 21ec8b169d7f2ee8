use thiserror::Error;

use crate::synthesis::SynthState;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("need at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },

    #[error("lambda must be finite and positive, got {0}")]
    InvalidLambda(f64),

    #[error("kernel cannot separate data from noise (lambda exceeded 2^60, train error {train_error})")]
    SeparationFailed { train_error: f64 },

    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroRow(usize),

    #[error("pool factor {factor} does not divide image side {side}")]
    PoolNotDivisible { factor: usize, side: usize },

    #[error("synthesis aborted at iteration {iter}: {reason}")]
    Aborted {
        iter: usize,
        reason: String,
        state: Box<SynthState>,
    },

    #[error("malformed IDX file: {0}")]
    Idx(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
