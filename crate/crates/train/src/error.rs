use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite value in `{op}` at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, op: &'static str },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("map {id} has dims {found:?}, expected {expected:?}")]
    Dims {
        id: String,
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("fold {0} is empty")]
    EmptyFold(usize),
    #[error("pretrained init requested without a CAE checkpoint")]
    MissingCheckpoint,
    #[error("map set is unlabeled")]
    Unlabeled,
    #[error(transparent)]
    Model(#[from] selftaught_models::ModelError),
    #[error(transparent)]
    Tensor(#[from] selftaught_core::TensorError),
    #[error(transparent)]
    Split(#[from] selftaught_splits::SplitError),
    #[error(transparent)]
    Stats(#[from] selftaught_stats::StatsError),
    #[error(transparent)]
    Curation(#[from] selftaught_curation::CurationError),
    #[error(transparent)]
    Volume(#[from] selftaught_volume::VolumeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
