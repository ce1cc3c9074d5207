use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("node {0} is constrained or outside the model")]
    UnknownNode(usize),
    #[error("factorization failed: {0}")]
    Factorization(&'static str),
    #[error("dynamic stiffness is singular at omega = {omega} rad/s")]
    Singular { omega: f64 },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("invalid diameter grid: {0}")]
    InvalidGrid(String),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("model too large for finite differences: {0} parameters")]
    TooLarge(usize),
}

#[derive(Debug, Error)]
pub enum PbpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid moment: variance {0}")]
    InvalidMoment(f64),
    #[error("non-positive total variance {0}")]
    Numeric(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("header: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pbp(#[from] PbpError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
