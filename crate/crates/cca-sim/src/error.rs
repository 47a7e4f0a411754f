use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    /// Rejected before any round runs.
    #[error("configuration error: {0}")]
    Config(String),
    /// Honest code or the engine broke a model rule; the run is aborted.
    #[error("simulation fault: {0}")]
    Fault(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(SimError::Config(msg.into()))
}

pub(crate) fn fault<T>(msg: impl Into<String>) -> Result<T> {
    Err(SimError::Fault(msg.into()))
}
