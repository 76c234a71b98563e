//! The generate, clean, split, fit and evaluate stages as plain functions.
//! The CLI calls these over files; tests call them in memory.

use anyhow::{bail, Context, Result};
use phosforge_core::baselines::{rf_train, svr_train, ForestConfig, SvrConfig, SvrReport};
use phosforge_core::ingest::{generate_synthetic, SynthConfig};
use phosforge_core::metrics::{evaluate, EvaluationReport};
use phosforge_core::nn::{train, Architecture, TrainConfig, TrainReport};
use phosforge_core::preprocess::{fingerprint, fit_minmax, remove_outliers, shuffled_indices, split};
use phosforge_core::{Dataset, ModelArtifact, ModelBody, ModelMetadata, SplitSpec};
use serde::{Deserialize, Serialize};

/// What to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Ann { architecture: Architecture, train: TrainConfig },
    Rf { forest: ForestConfig },
    Svr { svr: SvrConfig },
}

impl ModelSpec {
    pub fn ann(hidden: Vec<usize>, train: TrainConfig) -> Result<Self> {
        Ok(ModelSpec::Ann { architecture: Architecture::new(12, hidden)?, train })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SynthConfig),
    Records(Dataset),
}

/// An end-to-end run in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source: DataSource,
    pub clean: bool,
    pub split: SplitSpec,
    pub model: ModelSpec,
    pub thresholds: Vec<f64>,
}

/// Training-side diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitDetails {
    Ann(TrainReport),
    Rf { n_trees: usize, max_depth: usize },
    Svr(SvrReport),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub data_fingerprint: String,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub details: FitDetails,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<EvaluationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_validation: Option<CrossValidation>,
}

impl TrainSummary {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub folds: usize,
    pub seed: u64,
    pub reports: Vec<EvaluationReport>,
    pub mean_r2: f64,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub removed: usize,
    pub artifact: ModelArtifact,
    pub summary: TrainSummary,
    pub test_report: EvaluationReport,
}

pub fn load_source(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Synthetic(config) => Ok(generate_synthetic(config)?),
        DataSource::Records(data) => Ok(data.clone()),
    }
}

/// Fits `spec` on `train_set`, normalizing with ranges from `train_set` alone.
pub fn fit(train_set: &Dataset, val_set: Option<&Dataset>, spec: &ModelSpec) -> Result<(ModelArtifact, FitDetails)> {
    if train_set.is_empty() {
        bail!("training split is empty");
    }
    let norm = fit_minmax(train_set)?;
    let samples = norm.normalize_dataset(train_set)?.samples;
    let val = match val_set {
        Some(v) if !v.is_empty() => Some(norm.normalize_dataset(v)?.samples),
        _ => None,
    };
    let (body, details) = match spec {
        ModelSpec::Ann { architecture, train: config } => {
            let (parameters, report) = train(&samples, val.as_ref(), architecture, config)?;
            (ModelBody::Network { architecture: architecture.clone(), parameters }, FitDetails::Ann(report))
        }
        ModelSpec::Rf { forest: config } => {
            let forest = rf_train(&samples, config)?;
            let max_depth = forest.trees.iter().map(|t| t.depth()).max().unwrap_or(0);
            let details = FitDetails::Rf { n_trees: forest.trees.len(), max_depth };
            (ModelBody::Forest(forest), details)
        }
        ModelSpec::Svr { svr: config } => {
            let (model, report) = svr_train(&samples, config)?;
            (ModelBody::Svr(model), FitDetails::Svr(report))
        }
    };
    let config = serde_json::to_value(spec).expect("spec serializes");
    let metadata = ModelMetadata::new(config, fingerprint(train_set), None);
    Ok((ModelArtifact::new(body, norm, metadata), details))
}

/// Scores `artifact` on labelled records.
pub fn score(artifact: &ModelArtifact, data: &Dataset, thresholds: &[f64]) -> Result<EvaluationReport> {
    let samples = artifact.norm_params.normalize_dataset(data)?.samples;
    Ok(evaluate(artifact, &samples, &artifact.norm_params, thresholds)?)
}

/// Seeded k-fold cross-validation over `data`. Folds are contiguous runs of a
/// shuffled index list; the first `n mod k` folds get one extra row.
pub fn cross_validate(data: &Dataset, spec: &ModelSpec, folds: usize, seed: u64, thresholds: &[f64]) -> Result<CrossValidation> {
    if folds < 2 {
        bail!("cross-validation needs at least 2 folds, got {folds}");
    }
    if data.len() < folds {
        bail!("{} records cannot fill {folds} folds", data.len());
    }
    let order = shuffled_indices(data.len(), seed);
    let (base, extra) = (data.len() / folds, data.len() % folds);
    let mut reports = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let end = start + base + usize::from(k < extra);
        let held: Vec<usize> = order[start..end].to_vec();
        let kept: Vec<usize> = order[..start].iter().chain(&order[end..]).copied().collect();
        let (artifact, _) = fit(&data.select(&kept), None, spec).with_context(|| format!("fold {}", k + 1))?;
        reports.push(score(&artifact, &data.select(&held), thresholds).with_context(|| format!("fold {}", k + 1))?);
        start = end;
    }
    let mean = |f: fn(&EvaluationReport) -> f64| reports.iter().map(f).sum::<f64>() / folds as f64;
    let (mean_r2, mean_mse) = (mean(|r| r.r2), mean(|r| r.mse));
    Ok(CrossValidation { folds, seed, reports, mean_r2, mean_mse })
}

/// Splits `data`, fits on the training part and records the split, input
/// fingerprint and first test heat in the artifact.
pub fn train_on_split(
    data: &Dataset,
    spec: &ModelSpec,
    split_spec: &SplitSpec,
    cv_folds: Option<usize>,
    thresholds: &[f64],
) -> Result<(ModelArtifact, TrainSummary, Dataset)> {
    let (train_set, val_set, test_set) = split(data, split_spec)?;
    let (mut artifact, details) = fit(&train_set, Some(&val_set), spec)?;
    artifact.metadata = ModelMetadata {
        split: Some(*split_spec),
        example: test_set.records().first().cloned(),
        data_fingerprint: fingerprint(data),
        ..artifact.metadata
    };
    let validation = if val_set.is_empty() { None } else { Some(score(&artifact, &val_set, thresholds)?) };
    let cross_validation = match cv_folds {
        Some(k) => {
            let mut pool = train_set.clone();
            for (record, provenance) in val_set.iter() {
                pool.push(record.clone(), provenance)?;
            }
            Some(cross_validate(&pool, spec, k, split_spec.seed, thresholds)?)
        }
        None => None,
    };
    let summary = TrainSummary {
        data_fingerprint: fingerprint(data),
        n_train: train_set.len(),
        n_val: val_set.len(),
        n_test: test_set.len(),
        details,
        validation,
        cross_validation,
    };
    Ok((artifact, summary, test_set))
}

/// Re-derives the test part of the data a model was trained on.
pub fn recorded_test_split(artifact: &ModelArtifact, data: &Dataset) -> Result<Dataset> {
    let Some(split_spec) = artifact.metadata.split else {
        bail!("model records no split; pass --all to score every row");
    };
    let found = fingerprint(data);
    if found != artifact.metadata.data_fingerprint {
        bail!(
            "input fingerprint {found} differs from the model's training data {}; pass --all to score every row",
            artifact.metadata.data_fingerprint
        );
    }
    Ok(split(data, &split_spec)?.2)
}

pub fn run(config: &PipelineConfig) -> Result<PipelineOutput> {
    let raw = load_source(&config.source)?;
    let (data, removed) = if config.clean { remove_outliers(&raw)? } else { (raw, 0) };
    let (artifact, summary, test_set) = train_on_split(&data, &config.model, &config.split, None, &config.thresholds)?;
    let test_report = score(&artifact, &test_set, &config.thresholds)?;
    Ok(PipelineOutput { removed, artifact, summary, test_report })
}

