use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("model width {width} is not divisible by {heads} heads")]
    IndivisibleWidth { width: usize, heads: usize },

    #[error("dropout probability {0} outside [0, 1)")]
    DropoutProbability(f64),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;
