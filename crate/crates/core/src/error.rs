use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("patient {patient}: timestamp {timestamp} at row {row} does not increase")]
    NonMonotone { patient: String, row: usize, timestamp: i64 },

    #[error("patient {0}: glucose has zero variance")]
    Degenerate(String),

    #[error("provenance: {0}")]
    Provenance(String),

    #[error("no context summary for window {0}")]
    MissingSummary(String),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{artifact}: hash {found} does not match expected {expected}")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}`, known: {known:?}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: Vec<String>,
    },

    #[error("remote backend: {0}")]
    Remote(String),

    #[error("empty text cannot be embedded")]
    EmptyText,

    #[error("retrieval index is empty")]
    EmptyIndex,

    #[error("zero vector has no cosine similarity")]
    ZeroVector,

    #[error("{what}: expected width {expected}, got {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error(transparent)]
    Numerics(#[from] cgmrag_numerics::NumericsError),

    #[error(transparent)]
    Metrics(#[from] cgmrag_metrics::MetricsError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, one exit code each in the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    MissingArtifact,
    HashMismatch,
    Config,
    Data,
    Other,
}

impl CoreError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CoreError::MissingArtifact(_) => ErrorClass::MissingArtifact,
            CoreError::HashMismatch { .. } => ErrorClass::HashMismatch,
            CoreError::Config(_) | CoreError::Toml(_) | CoreError::UnknownStrategy { .. } => ErrorClass::Config,
            CoreError::Data { .. }
            | CoreError::MissingColumn(_)
            | CoreError::NonMonotone { .. }
            | CoreError::Degenerate(_)
            | CoreError::Provenance(_)
            | CoreError::MissingSummary(_)
            | CoreError::Csv(_) => ErrorClass::Data,
            CoreError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => ErrorClass::MissingArtifact,
            _ => ErrorClass::Other,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.class() {
            ErrorClass::MissingArtifact => "missing_artifact",
            ErrorClass::HashMismatch => "hash_mismatch",
            ErrorClass::Config => "malformed_config",
            ErrorClass::Data => "data_error",
            ErrorClass::Other => "error",
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
