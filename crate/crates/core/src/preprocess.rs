//! Box-plot outlier removal, min-max scaling and seeded splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Dataset, FeatureId, HeatRecord, Provenance, FEATURE_COUNT};
use crate::error::PreprocessError;

/// Tukey fence multiplier.
pub const FENCE_IQR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Quartiles {
    /// Closed interval `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]`.
    pub fn fences(&self) -> (f64, f64) {
        (self.q1 - FENCE_IQR * self.iqr, self.q3 + FENCE_IQR * self.iqr)
    }
}

/// Linear-interpolation quantile of sorted data at plotting position
/// `h = (n − 1)·p`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles, PreprocessError> {
    if values.len() < 4 {
        return Err(PreprocessError::TooFewValues { needed: 4, got: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PreprocessError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q2 = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    Ok(Quartiles { q1, q2, q3, iqr: q3 - q1 })
}

/// The thirteen columns checked for outliers: features then end-point P.
fn cleaning_columns(dataset: &Dataset) -> Result<Vec<Vec<f64>>, PreprocessError> {
    let mut columns = vec![Vec::with_capacity(dataset.len()); FEATURE_COUNT + 1];
    for record in dataset {
        let x = record.feature_vector()?;
        let p = record.endpoint_p.ok_or_else(|| PreprocessError::MissingEndpoint(record.heat_id.clone()))?;
        for (column, value) in columns.iter_mut().zip(x.iter().chain(std::iter::once(&p))) {
            column.push(*value);
        }
    }
    Ok(columns)
}

/// Marks every record with at least one of its 13 values strictly outside
/// its column's fences. Fences come from the full input.
pub fn detect_outliers(dataset: &Dataset) -> Result<Vec<bool>, PreprocessError> {
    if dataset.len() < 4 {
        return Err(PreprocessError::TooFewValues { needed: 4, got: dataset.len() });
    }
    let columns = cleaning_columns(dataset)?;
    let mut mask = vec![false; dataset.len()];
    for column in &columns {
        let (lo, hi) = quartiles(column)?.fences();
        for (flag, v) in mask.iter_mut().zip(column) {
            *flag |= *v < lo || *v > hi;
        }
    }
    Ok(mask)
}

/// Single-pass row removal; survivors keep their order and are flagged
/// `Cleaned`.
pub fn remove_outliers(dataset: &Dataset) -> Result<(Dataset, usize), PreprocessError> {
    let mask = detect_outliers(dataset)?;
    let keep: Vec<usize> = mask.iter().enumerate().filter(|(_, out)| !**out).map(|(i, _)| i).collect();
    let removed = dataset.len() - keep.len();
    Ok((dataset.select(&keep).with_provenance(Provenance::Cleaned), removed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, z: f64) -> f64 {
        self.min + z * (self.max - self.min)
    }
}

/// A column of the normalized space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Feature(FeatureId),
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub features: [MinMax; FEATURE_COUNT],
    pub target: MinMax,
    /// Fingerprint of the dataset the ranges were fitted on.
    pub fitted_on: String,
}

impl NormParams {
    pub fn range(&self, column: Column) -> MinMax {
        match column {
            Column::Feature(f) => self.features[f.index()],
            Column::Target => self.target,
        }
    }

    /// Scaled features and the features that left `[0, 1]`. No clamping.
    pub fn normalize_features(&self, x: &[f64; FEATURE_COUNT]) -> ([f64; FEATURE_COUNT], Vec<FeatureId>) {
        let z: [f64; FEATURE_COUNT] = std::array::from_fn(|i| self.features[i].scale(x[i]));
        let out_of_range = FeatureId::ALL.iter().copied().filter(|f| !(0.0..=1.0).contains(&z[f.index()])).collect();
        (z, out_of_range)
    }

    pub fn normalize(&self, value: f64, column: Column) -> f64 {
        self.range(column).scale(value)
    }

    pub fn denormalize(&self, value: f64, column: Column) -> f64 {
        self.range(column).unscale(value)
    }

    pub fn normalize_record(&self, record: &HeatRecord) -> Result<NormalizedRecord, PreprocessError> {
        let (features, out_of_range) = self.normalize_features(&record.feature_vector()?);
        Ok(NormalizedRecord { features, target: record.endpoint_p.map(|p| self.target.scale(p)), out_of_range })
    }

    /// Normalized copy of a labelled dataset.
    pub fn normalize_dataset(&self, dataset: &Dataset) -> Result<NormalizedSet, PreprocessError> {
        let mut samples = Samples::default();
        let mut out_of_range = false;
        for record in dataset {
            let normalized = self.normalize_record(record)?;
            let target = normalized.target.ok_or_else(|| PreprocessError::MissingEndpoint(record.heat_id.clone()))?;
            out_of_range |= !normalized.out_of_range.is_empty() || !(0.0..=1.0).contains(&target);
            samples.inputs.push(normalized.features.to_vec());
            samples.targets.push(target);
        }
        Ok(NormalizedSet { samples, out_of_range })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRecord {
    pub features: [f64; FEATURE_COUNT],
    pub target: Option<f64>,
    pub out_of_range: Vec<FeatureId>,
}

/// Model-ready inputs and targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Samples {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Self {
        assert_eq!(inputs.len(), targets.len(), "inputs and targets must pair up");
        Samples { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        Samples {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSet {
    pub samples: Samples,
    /// Set when any value fell outside the fitted range.
    pub out_of_range: bool,
}

/// Per-column min/max over `dataset` (features and end-point P).
pub fn fit_minmax(dataset: &Dataset) -> Result<NormParams, PreprocessError> {
    if dataset.is_empty() {
        return Err(PreprocessError::TooFewValues { needed: 1, got: 0 });
    }
    let columns = cleaning_columns(dataset)?;
    let ranges: Vec<MinMax> = columns
        .iter()
        .map(|c| MinMax {
            min: c.iter().copied().fold(f64::INFINITY, f64::min),
            max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    for (i, range) in ranges.iter().enumerate() {
        if range.max <= range.min {
            let name = FeatureId::from_index(i).map_or("endpoint_p", FeatureId::name);
            return Err(PreprocessError::ConstantColumn(name.to_string()));
        }
    }
    Ok(NormParams {
        features: std::array::from_fn(|i| ranges[i]),
        target: ranges[FEATURE_COUNT],
        fitted_on: fingerprint(dataset),
    })
}

/// SHA-256 over heat ids and the exact bit patterns of every value.
pub fn fingerprint(dataset: &Dataset) -> String {
    let mut hasher = Sha256::new();
    for record in dataset {
        hasher.update(record.heat_id.as_bytes());
        hasher.update([0u8]);
        for f in FeatureId::ALL {
            let bits = record.get(f).map_or(u64::MAX, f64::to_bits);
            hasher.update(bits.to_le_bytes());
        }
        hasher.update(record.endpoint_p.map_or(u64::MAX, f64::to_bits).to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self, PreprocessError> {
        let spec = SplitSpec { train_fraction: train, val_fraction: val, test_fraction: test, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        let fractions = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(PreprocessError::InvalidSplit("fractions must be finite and non-negative".into()));
        }
        if self.test_fraction <= 0.0 {
            return Err(PreprocessError::InvalidSplit("test fraction must be positive".into()));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PreprocessError::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` records: floors for val and test,
    /// the remainder to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // guard against 0.2 * 1005 = 200.99999...
        let part = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
        let val = part(self.val_fraction);
        let test = part(self.test_fraction);
        (n - val - test, val, test)
    }
}

/// Seeded Fisher–Yates shuffle followed by contiguous train/val/test slices.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset), PreprocessError> {
    spec.validate()?;
    let n = dataset.len();
    if n < 10 {
        return Err(PreprocessError::TooFewValues { needed: 10, got: n });
    }
    let (n_train, n_val, n_test) = spec.sizes(n);
    if n_test == 0 {
        return Err(PreprocessError::InvalidSplit(format!("test set would be empty for n = {n}")));
    }
    let order = shuffled_indices(n, spec.seed);
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((dataset.select(train), dataset.select(val), dataset.select(test)))
}

pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}
