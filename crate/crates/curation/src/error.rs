use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("HTTP {status} from {url}")]
    Status { status: u16, url: String },
    #[error("transport error for {url}: {msg}")]
    Transport { url: String, msg: String },
    #[error("gave up on {url} after {attempts} attempts (last: {last})")]
    RetriesExhausted { url: String, attempts: u32, last: String },
    #[error("malformed page {page}: {msg}")]
    MalformedPage { page: String, msg: String },
    #[error("unknown contrast `{0}`")]
    UnknownContrast(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("record {image_id}: {msg}")]
    Record { image_id: String, msg: String },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CurationError>;
