use thiserror::Error;

pub type Result<T, E = KnockoutError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KnockoutError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("index {index} out of bounds for sequence of length {len}")]
    OutOfBounds { index: usize, len: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("cannot parse schedule {input:?}: {reason}")]
    ScheduleParse { input: String, reason: String },

    #[error("mask of {len}x{len} exceeds the dense limit of {limit}; use the rule form")]
    MaskTooLarge { len: usize, limit: usize },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("ratio undefined: baseline score is {0}")]
    UndefinedRatio(f64),

    #[error("task failed under schedule `{schedule}`: {source}")]
    Task {
        schedule: String,
        #[source]
        source: Box<KnockoutError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization: {0}")]
    Serialize(String),
}

impl KnockoutError {
    /// Process exit code: 1 for runtime and I/O failures, 2 for usage and
    /// configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            KnockoutError::Io(_) | KnockoutError::Serialize(_) => 1,
            KnockoutError::Task { .. } => 1,
            _ => 2,
        }
    }
}
