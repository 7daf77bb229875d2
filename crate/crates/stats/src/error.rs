use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, have {have}")]
    TooShort { need: usize, have: usize },
    #[error("constant input: correlation undefined")]
    Constant,
    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("non-finite value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, StatsError>;
