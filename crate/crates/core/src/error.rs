use thiserror::Error;

pub type Result<T, E = SerError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SerError {
    #[error("decode error: {0}")]
    Decode(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("class {class} has {count} members, fewer than k={k}")]
    Stratification { class: String, count: usize, k: usize },
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<hound::Error> for SerError {
    fn from(e: hound::Error) -> Self {
        SerError::Decode(e.to_string())
    }
}
