use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    LossNotScalar(Vec<usize>),
    #[error("environment is not instrumented: {0} is unavailable")]
    NotInstrumented(&'static str),
    #[error("action dimension mismatch: expected {expected}, got {got}")]
    ActionDim { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("unknown task: {0}")]
    UnknownTask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
