use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty series")]
    Empty,

    #[error("reference has {reference} points but prediction has {predicted}")]
    LengthMismatch { reference: usize, predicted: usize },

    #[error("value {value} at index {index} outside guard band [1, 1000] mg/dL")]
    OutOfGuardBand { index: usize, value: f64 },

    #[error("glucose values must be positive and finite, got ref={reference} pred={predicted}")]
    NonPositive { reference: f64, predicted: f64 },

    #[error("series of length {len} is too short, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("sampling interval must be positive, got {0} s")]
    Interval(f64),

    #[error("decision table line {line}: {message}")]
    Table { line: usize, message: String },

    #[error("point matches several zones: {zones:?}")]
    Ambiguous { zones: Vec<String> },

    #[error("no zone matches and the table has no `otherwise` row")]
    Unclassified,

    #[error("combination matrix has no entry for band {band}, P-zone {p_zone}, R-zone {r_zone}")]
    MissingCombination {
        band: String,
        p_zone: String,
        r_zone: String,
    },
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
