use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("joint count mismatch: expected {expected}, got {got}")]
    JointCountMismatch { expected: usize, got: usize },

    #[error("invalid pose spec: {0}")]
    InvalidSpec(String),

    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("not enough visible joints: need {needed}, have {have}")]
    NotEnoughVisibleJoints { needed: usize, have: usize },

    #[error("empty joint mask")]
    EmptyMask,

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("not enough samples: need at least {needed}, have {have}")]
    NotEnoughSamples { needed: usize, have: usize },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed data: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, PoseError>;
