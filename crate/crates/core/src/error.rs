use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch in {what}: {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stale activation cache: network parameters changed since forward pass")]
    StaleCache,

    #[error("non-positive variance {0}")]
    NonPositiveVariance(f64),

    #[error("missing old log-probabilities in training batch")]
    MissingOldLogProbs,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("unknown non-nominality kind `{0}`")]
    UnknownKind(String),

    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
