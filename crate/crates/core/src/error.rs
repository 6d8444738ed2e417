use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A persisted container is malformed; `field` names the offending entry.
    #[error("format error in `{field}`: {reason}")]
    Format { field: String, reason: String },

    /// Input that is well-formed but mathematically degenerate (e.g. all zeros).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical quantity left its admissible domain.
    #[error("numerical domain error: {0}")]
    Domain(String),

    #[error("training diverged at step {step} (epoch {epoch}): loss = {loss}")]
    TrainingDivergence { step: usize, epoch: usize, loss: f64 },

    #[error("sampler diverged at timestep {timestep}")]
    SamplerDivergence { timestep: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
