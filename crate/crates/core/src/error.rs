use thiserror::Error;

/// Error taxonomy shared by every module: bad ids, violated preconditions,
/// rejected arguments, and internal invariants that cannot fail unless the
/// implementation itself is wrong.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
