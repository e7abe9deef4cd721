use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] hnam_tensor::TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("covariate `{name}`: {message}")]
    Covariate { name: String, message: String },
    #[error("cannot fit transformation for `{0}`: zero standard deviation")]
    ZeroStd(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("series not found: {0}")]
    SeriesNotFound(String),
    #[error("no window for series {series} at origin {origin}")]
    OriginNotFound { series: String, origin: String },
    #[error("covariate specs differ: {0}")]
    SpecMismatch(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
