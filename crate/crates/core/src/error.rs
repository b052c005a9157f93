use thiserror::Error;

#[derive(Debug, Error)]
pub enum QsaError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate prediction: {0}")]
    DegeneratePrediction(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("model mismatch: expected {expected}, found {found}")]
    ModelMismatch { expected: String, found: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = QsaError> = std::result::Result<T, E>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(QsaError::Config(msg.into()))
}
