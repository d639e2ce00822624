use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("singular system: X^T X is rank-deficient and lambda = 0; add regularization")]
    SingularSystem,

    #[error("projection exponent {0} is not present in the model")]
    UnknownExponent(u32),

    #[error("sequence is empty or shorter than the requested prefix ({0})")]
    EmptySequence(String),

    #[error("horizon out of range: {0}")]
    HorizonOutOfRange(String),

    #[error("corrupt model file at byte offset {offset}: {reason}")]
    CorruptModelFile { offset: usize, reason: String },

    #[error("non-finite loss during {stage}; the learning rate is likely too high")]
    NonFiniteLoss { stage: String },

    #[error("insufficient training pairs: {0}")]
    InsufficientPairs(String),

    #[error("horizon {0} was not fitted")]
    UnknownHorizon(usize),

    #[error("observation {symbol} at position {position} has zero probability under the model")]
    ZeroProbabilityObservation { position: usize, symbol: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("too few sequences: {0}")]
    TooFewSequences(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("inconsistent dimensions at line {line} (sequence `{sequence}`): header declares {expected} columns, row has {actual}")]
    InconsistentDims {
        line: usize,
        sequence: String,
        expected: usize,
        actual: usize,
    },

    #[error("no valid prediction positions: {0}")]
    NoValidPositions(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn non_finite(stage: impl Into<String>) -> Self {
        Error::NonFiniteLoss {
            stage: stage.into(),
        }
    }
}
