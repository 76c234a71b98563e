use thiserror::Error;

use crate::domain::FeatureId;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("unknown feature name `{0}`")]
    UnknownFeature(String),
    #[error("heat {heat_id}: feature {feature} is missing")]
    MissingFeature { heat_id: String, feature: FeatureId },
    #[error("duplicate heat id `{0}`")]
    DuplicateHeatId(String),
}

/// Fatal CSV problems. Per-row problems are reported as [`crate::ingest::RowError`].
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input has no header line")]
    MissingHeader,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("required column for {0} is absent")]
    MissingColumn(String),
    #[error("column for {0} appears more than once")]
    DuplicateColumn(String),
    #[error("cannot write an empty dataset")]
    EmptyDataset,
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("heat {0} has no measured end-point phosphorus")]
    MissingEndpoint(String),
    #[error("column {0} is constant and cannot be min-max scaled")]
    ConstantColumn(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("constant vector has no correlation")]
    ConstantVector,
    #[error("|r| = 1 gives an infinite t statistic")]
    InfiniteT,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("early stopping requires a validation set")]
    ValidationRequired,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("actual values are constant, R² is undefined")]
    ConstantActuals,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Error, PartialEq)]
pub enum MetallurgyError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("{0} is required")]
    Missing(&'static str),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("unsupported document format `{found}` (expected `{expected}`)")]
    Format { expected: String, found: String },
    #[error("document shape is inconsistent: {0}")]
    Shape(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
