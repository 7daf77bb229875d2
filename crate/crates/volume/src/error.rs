use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("truncated input: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("sizeof_hdr is {0}, expected 348 in either byte order")]
    HeaderSize(i32),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("header/image pair files (magic \"ni1\") are not supported")]
    HeaderPair,
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dimensionality: dim = {0:?}")]
    BadDims([i16; 8]),
    #[error("no sform affine (sform_code = 0)")]
    MissingSform,
    #[error("singular affine")]
    SingularAffine,
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),
    #[error("degenerate value range: min = max = {0}")]
    DegenerateRange(f64),
    #[error("pipeline order violated: {step} after {prior}")]
    PipelineOrder { step: &'static str, prior: &'static str },
    #[error("gzip: {0}")]
    Gzip(std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VolumeError>;
