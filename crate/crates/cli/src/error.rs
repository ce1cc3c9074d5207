use std::fmt;

use shm_core::error::{CheckpointError, DatasetError, ExperimentError, FemError, NnError, PbpError};

/// Failure class; each maps to a distinct process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Io,
    Numeric,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Io => 3,
            Kind::Numeric => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self { kind: Kind::Config, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { kind: Kind::Io, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn fem_kind(e: &FemError) -> Kind {
    match e {
        FemError::Singular { .. } | FemError::Factorization(_) => Kind::Numeric,
        _ => Kind::Config,
    }
}

fn dataset_kind(e: &DatasetError) -> Kind {
    match e {
        DatasetError::Fem(f) => fem_kind(f),
        DatasetError::InvalidGrid(_) => Kind::Config,
        _ => Kind::Io,
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self { kind: dataset_kind(&e), message: e.to_string() }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let kind = match &e {
            ExperimentError::Config(_) => Kind::Config,
            ExperimentError::UndefinedMetric(_) | ExperimentError::Diverged { .. } => Kind::Numeric,
            ExperimentError::Nn(NnError::Shape(_)) | ExperimentError::Nn(NnError::TooLarge(_)) => Kind::Config,
            ExperimentError::Nn(NnError::NonFinite(_)) => Kind::Numeric,
            ExperimentError::Pbp(PbpError::Config(_)) | ExperimentError::Pbp(PbpError::Dimension { .. }) => Kind::Config,
            ExperimentError::Pbp(_) => Kind::Numeric,
            ExperimentError::Dataset(d) => dataset_kind(d),
            ExperimentError::MissingCheckpoint(_)
            | ExperimentError::Checkpoint(_)
            | ExperimentError::Io(_)
            | ExperimentError::Json(_)
            | ExperimentError::Csv(_) => Kind::Io,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::io(e.to_string())
    }
}
