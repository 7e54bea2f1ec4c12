use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sample index {index} out of range for dataset of {count} samples")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("single-pass sampler exhausted after {draws} draws")]
    SamplerExhausted { draws: usize },

    #[error("newton did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("step {k} outside schedule of {steps} steps")]
    StepOutOfRange { k: usize, steps: usize },

    #[error("all iterate weights are zero")]
    DegenerateWeights,

    #[error("iterate diverged on machine {machine} at step {step}")]
    Diverged { machine: usize, step: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("round budget {budget} is infeasible: the derived schedule needs {required} rounds (minimal feasible budget {minimal})")]
    RoundBudget {
        budget: usize,
        required: usize,
        minimal: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
