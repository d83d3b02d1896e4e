//! Crate-wide error type.

/// Errors surfaced by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("call budget exhausted: {used}/{limit} used, {requested} more requested")]
    BudgetExhausted { used: u64, limit: u64, requested: u64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("prompt state space too large: {size} states exceeds limit {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },

    #[error("unknown oracle kind `{0}`")]
    UnknownOracleKind(String),

    #[error("token index {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: u32 },

    #[error("Cholesky factorization failed after jitter escalation up to {max_jitter}")]
    Factorization { max_jitter: f64 },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("unseen unigram `{0}`")]
    UnseenUnigram(String),

    #[error("remote oracle transport failure: {0}")]
    RemoteTransport(String),

    #[error("remote oracle returned HTTP status {0}")]
    RemoteStatus(u16),

    #[error("malformed remote response: {0}")]
    RemoteMalformed(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("config validation error at {path}: {message}")]
    ConfigValidation { path: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by a bad configuration rather than a runtime
    /// failure; the CLI maps these to exit code 2.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::ConfigParse(_) | Error::ConfigValidation { .. } | Error::UnknownOracleKind(_)
        )
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigValidation {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
