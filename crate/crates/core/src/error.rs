use thiserror::Error;

#[derive(Debug, Error)]
pub enum EcvError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("input matrix is not symmetric")]
    NotSymmetric,

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("loss is undefined: {0}")]
    UndefinedLoss(String),

    #[error("no candidate produced a finite loss in any split")]
    NoValidCandidate,
}

pub type Result<T> = std::result::Result<T, EcvError>;

pub(crate) fn invalid(msg: impl Into<String>) -> EcvError {
    EcvError::InvalidParameter(msg.into())
}
