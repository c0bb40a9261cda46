use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown ball id {0}")]
    UnknownBall(usize),

    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),

    #[error("bodies are not in approaching contact: {0}")]
    NotInContact(String),

    #[error("more than {limit} collision events in step {step}")]
    EventOverflow { step: usize, limit: usize },

    #[error("invalid world state: {0}")]
    InvalidState(String),

    #[error("could not place balls after {attempts} rejections{}", .sequence.map(|i| format!(" (sequence {i})")).unwrap_or_default())]
    PlacementFailure { attempts: usize, sequence: Option<usize> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalarLoss(Vec<usize>),

    #[error("sequence {index} has {frames} frames, fewer than the window of {needed}")]
    SequenceTooShort { index: usize, frames: usize, needed: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergenceDetected { epoch: usize, loss: f64 },

    #[error("checkpoint missing or incompatible: {0}")]
    CheckpointMissing(String),

    #[error("{count} balls exceed the {max} slots of the frame-centric model")]
    TooManyBalls { count: usize, max: usize },

    #[error("invalid goal: {0}")]
    InvalidGoal(String),

    #[error("no results to aggregate")]
    EmptyResults,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
