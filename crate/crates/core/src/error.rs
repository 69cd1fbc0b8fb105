use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("primitive {index} has a non-finite {field}")]
    NonFinitePrimitive { index: usize, field: &'static str },
    #[error("non-finite gradient for {param} of primitive {index}")]
    NonFiniteGradient { index: usize, param: &'static str },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate index {0}")]
    DuplicateIndex(usize),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("checkpoints missing: re-run rasterize_forward with checkpoints enabled")]
    MissingCheckpoints,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("keyframe {0} is already in the pool")]
    DuplicateKeyframe(u64),
    #[error("unknown keyframe {0}")]
    UnknownKeyframe(u64),
    #[error("keyframe {0} has no remaining iterations")]
    BudgetExhausted(u64),
    #[error("keyframe pool is empty")]
    EmptyPool,
}
