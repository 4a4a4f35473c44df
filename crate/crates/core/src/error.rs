use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("corrupt container: {0}")]
    CorruptContainer(String),

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error("sample {sample}: {what}")]
    OutOfBounds { sample: usize, what: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    /// A logged action (or embedding tuple) has zero probability under the
    /// logging policy, so its importance weight is undefined.
    #[error("sample {sample}: zero logging probability at position {position}")]
    ZeroLoggingProbability { sample: usize, position: usize },

    #[error("self-normalization undefined: weights at position {position} sum to zero")]
    ZeroWeightColumn { position: usize },

    #[error("sample {sample}: no behavior id logged")]
    MissingBehavior { sample: usize },

    #[error("enumeration too large: {atoms} atoms exceeds cap {cap}")]
    TooLarge { atoms: u128, cap: u128 },

    #[error("unknown behavior matrix '{0}'")]
    UnknownBehavior(String),

    #[error("unknown estimator '{0}'")]
    UnknownEstimator(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
