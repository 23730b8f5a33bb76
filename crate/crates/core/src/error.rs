use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("sentence `{sentence}` is not valid for scale {scale}")]
    InvalidSentence { sentence: String, scale: String },
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("malformed voice rows: {0}")]
    MalformedVoice(&'static str),
    #[error("episode already finished at step {0}")]
    EpisodeDone(usize),
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: &'static str, epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;
