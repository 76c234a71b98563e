use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::BaselineError;
use crate::preprocess::Samples;

/// Relative slack when comparing split qualities; near-equal splits count
/// as ties and the earlier candidate (lower feature, lower threshold) wins.
pub const SPLIT_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub feature_fraction: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            feature_fraction: 1.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |m: &str| Err(BaselineError::InvalidConfig(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return bad("feature_fraction must lie in (0, 1]");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        Ok(())
    }
}

/// `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        match self {
            TreeNode::Leaf { value } => vec![*value],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaf_values();
                v.extend(right.leaf_values());
                v
            }
        }
    }

    fn check(&self, n_features: usize) -> Result<(), String> {
        match self {
            TreeNode::Leaf { value } if value.is_finite() => Ok(()),
            TreeNode::Leaf { .. } => Err("non-finite leaf value".into()),
            TreeNode::Split { feature, threshold, left, right } => {
                if *feature >= n_features || !threshold.is_finite() {
                    return Err(format!("bad split on feature {feature}"));
                }
                left.check(n_features)?;
                right.check(n_features)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

impl Forest {
    pub fn check(&self) -> Result<(), String> {
        if self.trees.is_empty() {
            return Err("forest has no trees".into());
        }
        self.trees.iter().try_for_each(|t| t.check(self.n_features))
    }
}

/// A chosen split: feature, threshold, and the number of samples sent left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
}

/// Midpoint between two consecutive distinct values that never rounds up
/// to the larger one.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Best squared-error split over `features` for the samples at `indices`.
///
/// Maximizes `S_L²/n_L + S_R²/n_R`, which is equivalent to minimizing the
/// summed child SSE.
pub fn best_split(
    samples: &Samples,
    indices: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let n = indices.len();
    let total: f64 = indices.iter().map(|&i| samples.targets[i]).sum();
    let mut best: Option<(f64, SplitChoice)> = None;
    let mut sorted = indices.to_vec();
    for &feature in features {
        sorted.sort_by(|&a, &b| samples.inputs[a][feature].total_cmp(&samples.inputs[b][feature]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += samples.targets[sorted[k]];
            let lo = samples.inputs[sorted[k]][feature];
            let hi = samples.inputs[sorted[k + 1]][feature];
            let n_left = k + 1;
            if lo == hi || n_left < min_samples_leaf || n - n_left < min_samples_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64;
            let better = match best {
                None => true,
                Some((b, _)) => score > b + SPLIT_TIE_TOLERANCE * b.abs().max(1e-300),
            };
            if better {
                best = Some((score, SplitChoice { feature, threshold: midpoint(lo, hi) }));
            }
        }
    }
    best.map(|(_, choice)| choice)
}

struct Grower<'a> {
    samples: &'a Samples,
    config: &'a ForestConfig,
    n_candidates: usize,
    rng: ChaCha8Rng,
}

impl Grower<'_> {
    fn grow(&mut self, indices: &[usize], depth: usize) -> TreeNode {
        let targets = indices.iter().map(|&i| self.samples.targets[i]);
        let value = targets.clone().sum::<f64>() / indices.len() as f64;
        let (min, max) = targets.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        let n = indices.len();
        if self.config.max_depth.is_some_and(|d| depth >= d)
            || n < self.config.min_samples_split
            || n < 2 * self.config.min_samples_leaf
            || min == max
        {
            return TreeNode::Leaf { value };
        }
        let n_features = self.samples.dim();
        let features: Vec<usize> = if self.n_candidates >= n_features {
            (0..n_features).collect()
        } else {
            let mut f = index::sample(&mut self.rng, n_features, self.n_candidates).into_vec();
            f.sort_unstable();
            f
        };
        let Some(split) = best_split(self.samples, indices, &features, self.config.min_samples_leaf) else {
            return TreeNode::Leaf { value };
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| self.samples.inputs[i][split.feature] <= split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(&left, depth + 1)),
            right: Box::new(self.grow(&right, depth + 1)),
        }
    }
}

/// Greedy CART regression tree on the given rows (duplicates allowed).
pub fn grow_tree(samples: &Samples, indices: &[usize], config: &ForestConfig, seed: u64) -> TreeNode {
    let n_candidates = (config.feature_fraction * samples.dim() as f64).ceil() as usize;
    let mut grower = Grower { samples, config, n_candidates, rng: ChaCha8Rng::seed_from_u64(seed) };
    grower.grow(indices, 0)
}

/// Trains `n_trees` trees in parallel; tree `k` uses seed `seed + k`.
pub fn rf_train(samples: &Samples, config: &ForestConfig) -> Result<Forest, BaselineError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(BaselineError::EmptyTrainingSet);
    }
    let n = samples.len();
    if samples.inputs.iter().any(|x| x.len() != samples.dim()) {
        return Err(BaselineError::Shape("ragged inputs".into()));
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|k| {
            let seed = config.seed.wrapping_add(k as u64);
            let indices: Vec<usize> = if config.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1);
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(samples, &indices, config, seed)
        })
        .collect();
    Ok(Forest { n_features: samples.dim(), trees })
}

pub fn rf_predict(forest: &Forest, x: &[f64]) -> f64 {
    forest.trees.iter().map(|t| t.predict(x)).sum::<f64>() / forest.trees.len() as f64
}
