use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] mclip_core::Error),

    #[error("invalid policy dimensions: {0}")]
    Dims(String),

    #[error("no feasible action")]
    NoFeasibleAction,

    #[error("infeasible action {action} at step {step}")]
    InfeasibleStep { step: usize, action: usize },

    #[error("role mismatch: {0}")]
    Role(String),

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
