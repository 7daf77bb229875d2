use selftaught_core::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("layer count mismatch: network has {network} conv layers, checkpoint encoder has {checkpoint}")]
    LayerCountMismatch { network: usize, checkpoint: usize },
    #[error("shape mismatch at `{name}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint is missing `{0}`")]
    MissingTensor(String),
    #[error("input dims {found:?} do not match plan input dims {expected:?}")]
    InputDims { expected: Vec<usize>, found: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
