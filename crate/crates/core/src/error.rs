use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition mixture needs at least one prior mode")]
    EmptyPrior,

    #[error("appearance model {0} not found")]
    ModelNotFound(u32),

    #[error("frame/candidate dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("every particle fell below the likelihood threshold")]
    AllParticlesDiscarded,

    #[error("sequence needs at least 2 frames, got {0}")]
    SequenceTooShort(usize),

    #[error("sequence has {frames} frames but {truth} ground-truth boxes")]
    LengthMismatch { frames: usize, truth: usize },

    #[error("unknown scenario kind `{0}`")]
    UnknownScenarioKind(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
