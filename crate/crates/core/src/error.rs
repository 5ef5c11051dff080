use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown algorithm `{id}` (valid ids: {valid})")]
    UnknownAlgorithm { id: String, valid: String },

    #[error("unknown suite `{id}` (valid suites: {valid})")]
    UnknownSuite { id: String, valid: String },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("objective evaluation failed: {0}")]
    Evaluation(String),

    #[error("detector protocol error: {0}")]
    Protocol(String),

    #[error("{context}: malformed input at line {line}: {message}")]
    Parse { context: String, line: u64, message: String },

    #[error("scoring failed: {0}")]
    Scoring(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
