use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation received an argument outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration file could not be read or violates an invariant.
    #[error("config error: {0}")]
    Config(String),

    /// JSON (de)serialization failure; carries serde's line/column info.
    #[error("config parse error: {0}")]
    ConfigParse(#[from] serde_json::Error),

    /// The convex subproblem solver failed to certify a solution.
    #[error("subproblem solver: {0}")]
    Solver(String),

    /// The outer SCA loop aborted; the partial trace is preserved so
    /// callers can still write diagnostics.
    #[error("SCA aborted after {iterations} iterations: {message}")]
    ScaAborted {
        message: String,
        iterations: usize,
        trace: Box<crate::sca::ScaTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
