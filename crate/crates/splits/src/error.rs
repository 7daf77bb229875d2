use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("empty manifest")]
    Empty,
    #[error("row {0} has no subject id")]
    MissingSubject(String),
    #[error("row {0} has no study id")]
    MissingStudy(String),
    #[error("{have} subjects cannot fill {k} folds")]
    TooFewSubjects { have: usize, k: usize },
    #[error("size {size} is not divisible by {k}")]
    Indivisible { size: usize, k: usize },
    #[error("fold {fold} has {have} subjects, {need} needed{context}")]
    InsufficientFold {
        fold: usize,
        have: usize,
        need: usize,
        context: String,
    },
    #[error("subject leakage: {0:?}")]
    Leakage(Vec<String>),
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SplitError>;
