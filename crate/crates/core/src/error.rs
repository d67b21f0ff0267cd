use thiserror::Error;

/// Everything that can go wrong in the library, from malformed configs to
/// diverging optimizers. IO and JSON errors are passed through transparently.
#[derive(Debug, Error)]
pub enum PrefError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("not a permutation of 0..{n}")]
    InvalidPermutation { n: usize },

    #[error("unknown (prompt, response) pair ({prompt}, {response})")]
    UnknownId { prompt: u32, response: u32 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("malformed sample: {0}")]
    MalformedSample(String),

    #[error("{loss} loss is not defined for the {kind} parameterization")]
    IncompatibleLoss { loss: &'static str, kind: &'static str },

    #[error("dataset was generated from a different world (hash {expected} vs {got})")]
    WorldMismatch { expected: String, got: String },

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PrefError>;
