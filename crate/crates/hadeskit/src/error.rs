//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the toolkit's operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("metric column entirely missing: {0}")]
    MissingColumn(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("selector matched no chunks")]
    EmptySelection,

    #[error("event has no tokens")]
    EmptyEvent,

    #[error("degenerate vocabulary: corpus has a single distinct token")]
    DegenerateVocabulary,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered: {0}")]
    Numerical(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("labeled set contains a single class")]
    DegenerateLabels,

    #[error("empty test set")]
    EmptyTestSet,

    #[error("metric not assigned to any aspect: {0}")]
    UnmappedMetric(String),

    #[error("fault windows overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingFaults(u64, u64, u64, u64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
