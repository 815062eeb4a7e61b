use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// First violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("l_o must be positive")]
    EmptyOutput,
    #[error("l_o exceeds l_s")]
    OutputExceedsPool,
    #[error("max_count must be positive")]
    ZeroMaxCount,
    #[error("max_count exceeds l_o")]
    MaxCountExceedsOutput,
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("d_model not divisible by n_heads")]
    HeadSplit,
    #[error("n_layers must be at least 1")]
    NoLayers,
    #[error("window_w must be at least 1")]
    ZeroWindow,
    #[error("lambda_mmr must lie in [0, 1]")]
    Lambda,
    #[error("objective weights must be non-negative with a positive sum")]
    Weights,
    #[error("empty queue_specs")]
    NoQueues,
    #[error("queue `{0}` has no nonzero coefficient")]
    ZeroQueue(String),
    #[error("duplicate queue priority {0}")]
    DuplicatePriority(i64),
    #[error("template references queue {0}, but only {1} queues exist")]
    Template(usize, usize),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("index {index} out of range 1..={len}")]
    OutOfRange { index: usize, len: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("candidate queues exhausted after {picked} of {wanted} picks")]
    Exhausted { picked: usize, wanted: usize },
    #[error("search space of {0} arrangements exceeds the 1000000 guard")]
    GuardExceeded(u128),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
