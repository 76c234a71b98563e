//! Data cleaning, correlation analysis, model training and evaluation for
//! predicting end-point phosphorus of steel in a scrap-based electric arc
//! furnace.

pub mod artifact;
pub mod baselines;
pub mod domain;
pub mod error;
pub mod ingest;
pub mod metallurgy;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod stats;

pub use artifact::{ModelArtifact, ModelBody, ModelMetadata, Prediction, Regressor};
pub use domain::{Dataset, FeatureId, HeatRecord, Provenance, FEATURE_COUNT};
pub use preprocess::{NormParams, Samples, SplitSpec};
