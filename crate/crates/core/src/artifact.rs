//! Trained models bundled with their normalization and provenance, and
//! their JSON model files.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{rf_predict, svr_predict, Forest, SvrModel};
use crate::domain::{FeatureId, HeatRecord, FEATURE_COUNT};
use crate::error::{DomainError, PersistError};
use crate::nn::{predict_one, Activation, Architecture, Layer, Parameters};
use crate::preprocess::{Column, NormParams, SplitSpec};

pub const NETWORK_FORMAT: &str = "phosforge-model/1";
pub const FOREST_FORMAT: &str = "phosforge-forest/1";
pub const SVR_FORMAT: &str = "phosforge-svr/1";

/// Anything that maps a normalized feature vector to a normalized target.
pub trait Regressor {
    fn predict_normalized(&self, x: &[f64]) -> f64;
}

impl Regressor for Parameters {
    fn predict_normalized(&self, x: &[f64]) -> f64 {
        predict_one(self, x)
    }
}

impl Regressor for Forest {
    fn predict_normalized(&self, x: &[f64]) -> f64 {
        rf_predict(self, x)
    }
}

impl Regressor for SvrModel {
    fn predict_normalized(&self, x: &[f64]) -> f64 {
        svr_predict(self, x)
    }
}

impl<F: Fn(&[f64]) -> f64> Regressor for F {
    fn predict_normalized(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Network { architecture: Architecture, parameters: Parameters },
    Forest(Forest),
    Svr(SvrModel),
}

impl ModelBody {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelBody::Network { .. } => "ann",
            ModelBody::Forest(_) => "rf",
            ModelBody::Svr(_) => "svr",
        }
    }

    pub fn format(&self) -> &'static str {
        match self {
            ModelBody::Network { .. } => NETWORK_FORMAT,
            ModelBody::Forest(_) => FOREST_FORMAT,
            ModelBody::Svr(_) => SVR_FORMAT,
        }
    }
}

impl Regressor for ModelBody {
    fn predict_normalized(&self, x: &[f64]) -> f64 {
        match self {
            ModelBody::Network { parameters, .. } => parameters.predict_normalized(x),
            ModelBody::Forest(forest) => forest.predict_normalized(x),
            ModelBody::Svr(svr) => svr.predict_normalized(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Training configuration as given to the trainer.
    pub config: Value,
    /// Fingerprint of the full dataset the split was drawn from.
    pub data_fingerprint: String,
    pub split: Option<SplitSpec>,
    pub created_unix: u64,
    pub format_version: u32,
    /// A held-out record kept for smoke checks of deployed models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<HeatRecord>,
}

impl ModelMetadata {
    pub fn new(config: Value, data_fingerprint: String, split: Option<SplitSpec>) -> Self {
        ModelMetadata { config, data_fingerprint, split, created_unix: creation_time(), format_version: 1, example: None }
    }
}

/// Seconds since the epoch, overridable through `SOURCE_DATE_EPOCH` for
/// reproducible model files.
pub fn creation_time() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_wtpct: f64,
    /// Features whose normalized value left `[0, 1]`.
    pub out_of_range: Vec<FeatureId>,
}

impl Prediction {
    pub fn p_ppm(&self) -> f64 {
        self.p_wtpct * 1e4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub body: ModelBody,
    pub norm_params: NormParams,
    pub metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct NetworkArchitecture {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BodyDoc {
    Network { architecture: NetworkArchitecture, parameters: Vec<Vec<f64>> },
    Forest { forest: Forest },
    Svr { svr: SvrModel },
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    #[serde(flatten)]
    body: BodyDoc,
    norm_params: NormParams,
    metadata: ModelMetadata,
}

#[derive(Deserialize)]
struct FormatProbe {
    format: Option<String>,
}

fn shape(msg: impl Into<String>) -> PersistError {
    PersistError::Shape(msg.into())
}

/// Each layer's weights row-major (`fan_out` rows of `fan_in`), then its biases.
fn flatten(params: &Parameters) -> Vec<Vec<f64>> {
    params.layers.iter().map(|l| l.weights.iter().chain(&l.bias).copied().collect()).collect()
}

fn unflatten(arch: &Architecture, flat: &[Vec<f64>]) -> Result<Parameters, PersistError> {
    let sizes = arch.layer_sizes();
    if flat.len() != sizes.len() - 1 {
        return Err(shape(format!("expected {} parameter blocks, found {}", sizes.len() - 1, flat.len())));
    }
    let layers = sizes
        .windows(2)
        .zip(flat)
        .enumerate()
        .map(|(i, (w, block))| {
            let (fan_in, fan_out) = (w[0], w[1]);
            if block.len() != fan_out * (fan_in + 1) {
                return Err(shape(format!(
                    "layer {} needs {} values, found {}",
                    i + 1,
                    fan_out * (fan_in + 1),
                    block.len()
                )));
            }
            let (weights, bias) = block.split_at(fan_out * fan_in);
            Ok(Layer { fan_in, fan_out, weights: weights.to_vec(), bias: bias.to_vec() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Parameters { layers })
}

fn check_norm(norm: &NormParams) -> Result<(), PersistError> {
    for (i, range) in norm.features.iter().chain(std::iter::once(&norm.target)).enumerate() {
        if !(range.min.is_finite() && range.max.is_finite() && range.max > range.min) {
            return Err(shape(format!("normalization range {i} is degenerate")));
        }
    }
    Ok(())
}

impl ModelArtifact {
    pub fn new(body: ModelBody, norm_params: NormParams, metadata: ModelMetadata) -> Self {
        ModelArtifact { body, norm_params, metadata }
    }

    pub fn format(&self) -> &'static str {
        self.body.format()
    }

    pub fn architecture(&self) -> Option<&Architecture> {
        match &self.body {
            ModelBody::Network { architecture, .. } => Some(architecture),
            _ => None,
        }
    }

    pub fn predict_features(&self, x: &[f64; FEATURE_COUNT]) -> Prediction {
        let (z, out_of_range) = self.norm_params.normalize_features(x);
        let y = self.body.predict_normalized(&z);
        Prediction { p_wtpct: self.norm_params.denormalize(y, Column::Target), out_of_range }
    }

    pub fn predict(&self, record: &HeatRecord) -> Result<Prediction, DomainError> {
        Ok(self.predict_features(&record.feature_vector()?))
    }

    pub fn to_json(&self) -> String {
        let body = match &self.body {
            ModelBody::Network { architecture, parameters } => BodyDoc::Network {
                architecture: NetworkArchitecture {
                    layer_sizes: architecture.layer_sizes(),
                    activation: architecture.activation,
                },
                parameters: flatten(parameters),
            },
            ModelBody::Forest(forest) => BodyDoc::Forest { forest: forest.clone() },
            ModelBody::Svr(svr) => BodyDoc::Svr { svr: svr.clone() },
        };
        let doc = Document {
            format: self.format().to_string(),
            body,
            norm_params: self.norm_params.clone(),
            metadata: self.metadata.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        let probe: FormatProbe = serde_json::from_str(text)?;
        let found = probe.format.unwrap_or_default();
        if ![NETWORK_FORMAT, FOREST_FORMAT, SVR_FORMAT].contains(&found.as_str()) {
            return Err(PersistError::Format { expected: NETWORK_FORMAT.to_string(), found });
        }
        let doc: Document = serde_json::from_str(text)?;
        check_norm(&doc.norm_params)?;
        let body = match (found.as_str(), doc.body) {
            (NETWORK_FORMAT, BodyDoc::Network { architecture, parameters }) => {
                let sizes = architecture.layer_sizes;
                if sizes.len() < 3 || sizes[sizes.len() - 1] != 1 {
                    return Err(shape("network needs input, hidden and single output layers"));
                }
                let arch = Architecture::new(sizes[0], sizes[1..sizes.len() - 1].to_vec())
                    .map_err(|e| shape(e.to_string()))?;
                let parameters = unflatten(&arch, &parameters)?;
                if parameters.values().any(|v| !v.is_finite()) {
                    return Err(shape("non-finite network parameter"));
                }
                ModelBody::Network { architecture: arch, parameters }
            }
            (FOREST_FORMAT, BodyDoc::Forest { forest }) => {
                forest.check().map_err(shape)?;
                ModelBody::Forest(forest)
            }
            (SVR_FORMAT, BodyDoc::Svr { svr }) => {
                svr.check(None).map_err(shape)?;
                ModelBody::Svr(svr)
            }
            (format, _) => return Err(shape(format!("body does not match format `{format}`"))),
        };
        let dim = match &body {
            ModelBody::Network { architecture, .. } => Some(architecture.input_dim),
            ModelBody::Forest(forest) => Some(forest.n_features),
            ModelBody::Svr(svr) => svr.input_dim(),
        };
        if dim.is_some_and(|d| d != FEATURE_COUNT) {
            return Err(shape(format!("model expects {} inputs, not {FEATURE_COUNT}", dim.unwrap_or(0))));
        }
        Ok(ModelArtifact { body, norm_params: doc.norm_params, metadata: doc.metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersistError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Regressor for ModelArtifact {
    fn predict_normalized(&self, x: &[f64]) -> f64 {
        self.body.predict_normalized(x)
    }
}
