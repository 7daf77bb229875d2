use selftaught_train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("invalid recipe: {0}")]
    Recipe(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no runs found")]
    NoRuns,
    #[error("missing CAE checkpoint for {0}")]
    MissingCheckpoint(String),
    #[error("split infeasible for this dataset: {0}")]
    Infeasible(String),
    #[error("pools share ids: {0:?}")]
    PoolOverlap(Vec<String>),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Split(#[from] selftaught_splits::SplitError),
    #[error(transparent)]
    Stats(#[from] selftaught_stats::StatsError),
    #[error(transparent)]
    Curation(#[from] selftaught_curation::CurationError),
    #[error(transparent)]
    Volume(#[from] selftaught_volume::VolumeError),
    #[error(transparent)]
    Model(#[from] selftaught_models::ModelError),
    #[error(transparent)]
    Tensor(#[from] selftaught_core::TensorError),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Process exit code for validation failures.
pub const EXIT_VALIDATION: i32 = 2;
/// Process exit code for runtime and numeric failures.
pub const EXIT_RUNTIME: i32 = 3;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        use HarnessError::*;
        match self {
            Spec(_) | Recipe(_) | Config(_) | MissingCheckpoint(_) | Infeasible(_) | PoolOverlap(_) | Toml(_)
            | Json(_) | Split(_) | Curation(_) | Model(_) | Volume(_) | NoRuns => EXIT_VALIDATION,
            Train(e) => match e {
                TrainError::Config(_)
                | TrainError::Dims { .. }
                | TrainError::MissingCheckpoint
                | TrainError::Unlabeled
                | TrainError::EmptyFold(_)
                | TrainError::Split(_)
                | TrainError::Model(_)
                | TrainError::Curation(_)
                | TrainError::Json(_) => EXIT_VALIDATION,
                _ => EXIT_RUNTIME,
            },
            Stats(_) | Tensor(_) | Io(_) => EXIT_RUNTIME,
        }
    }
}
