use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// A sampler chain left the finite domain.
    #[error("numerical divergence at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("numerical underflow: {0}")]
    Underflow(String),

    /// Malformed checkpoint or other binary artifact.
    #[error("bad format: {0}")]
    Format(String),

    #[error("measurement {id}: {source}")]
    Measurement {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("EM iteration {k}: {source}")]
    EmIteration {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(expected: &[usize], got: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }
}
