use sasr_tensor::TensorError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SasrError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed PGM: {detail}")]
    Pgm { path: PathBuf, detail: String },
    #[error("not a checkpoint (bad magic header)")]
    NotACheckpoint,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("config line {line}: {detail}")]
    Config { line: usize, detail: String },
    #[error("non-finite gradient in `{0}`; step aborted")]
    NonFiniteGradient(String),
    #[error("report serialization: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, SasrError>;

pub(crate) fn invalid<T>(detail: impl Into<String>) -> Result<T> {
    Err(SasrError::InvalidInput(detail.into()))
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> SasrError {
    let path = path.into();
    move |source| SasrError::Io { path, source }
}
