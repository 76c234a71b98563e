use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{accumulate_batch, forward_batch, init_params, Architecture, BatchWorkspace, Parameters};
use crate::error::NnError;
use crate::preprocess::Samples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub restore_best: bool,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping { patience: 50, restore_best: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 500,
            batch_size: 50,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            early_stopping: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: &str| Err(NnError::InvalidConfig(msg.to_string()));
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }
}

/// Per-epoch learning curves on the normalized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// Present when a validation set was supplied.
    pub val_loss: Option<Vec<f64>>,
    /// 1-based epoch with the lowest validation loss (training loss without
    /// a validation set).
    pub best_epoch: usize,
    pub iterations_per_epoch: usize,
    pub total_iterations: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

pub fn iterations_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Mean squared error of the network over a sample set.
pub fn evaluate_loss(params: &Parameters, samples: &Samples) -> f64 {
    let mut ws = BatchWorkspace::new();
    let mut sum = 0.0;
    for (inputs, targets) in samples.inputs.chunks(EVAL_CHUNK).zip(samples.targets.chunks(EVAL_CHUNK)) {
        forward_batch(params, inputs.iter().map(Vec::as_slice), &mut ws);
        for (y_hat, y) in ws.outputs().iter().zip(targets) {
            sum += (y_hat - y) * (y_hat - y);
        }
    }
    sum / samples.len() as f64
}

const EVAL_CHUNK: usize = 64;

/// Mini-batch Adam on the mean squared error.
///
/// Each epoch reshuffles the training order (seeded), averages per-sample
/// gradients over each batch and takes one Adam step per batch; the last
/// batch may be short. Bitwise deterministic for fixed inputs.
pub fn train(
    train_set: &Samples,
    val_set: Option<&Samples>,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<(Parameters, TrainReport), NnError> {
    train_observed(train_set, val_set, arch, config, |_, _, _| {})
}

/// [`train`] with a callback after every epoch, given the 1-based epoch,
/// the current parameters and the report so far.
pub fn train_observed(
    train_set: &Samples,
    val_set: Option<&Samples>,
    arch: &Architecture,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &Parameters, &TrainReport),
) -> Result<(Parameters, TrainReport), NnError> {
    arch.validate()?;
    config.validate()?;
    if train_set.is_empty() {
        return Err(NnError::EmptyTrainingSet);
    }
    if config.early_stopping.is_some() && val_set.is_none_or(Samples::is_empty) {
        return Err(NnError::ValidationRequired);
    }
    if config.batch_size > train_set.len() {
        return Err(NnError::InvalidConfig(format!(
            "batch size {} exceeds {} training samples",
            config.batch_size,
            train_set.len()
        )));
    }
    for set in std::iter::once(train_set).chain(val_set) {
        if set.inputs.iter().any(|x| x.len() != arch.input_dim) {
            return Err(NnError::Shape(format!("inputs must have {} features", arch.input_dim)));
        }
    }

    let mut params = init_params(arch, config.seed);
    let mut state = AdamState::new(&params);
    let adam = config.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut grads = Parameters::zeros_like(&params);
    let mut ws = BatchWorkspace::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let per_epoch = iterations_per_epoch(train_set.len(), config.batch_size);
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: val_set.map(|_| Vec::with_capacity(config.epochs)),
        best_epoch: 0,
        iterations_per_epoch: per_epoch,
        total_iterations: 0,
        stopped_early: false,
    };
    let mut best_loss = f64::INFINITY;
    let mut best_params: Option<Parameters> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            let inputs = batch.iter().map(|&i| train_set.inputs[i].as_slice());
            let targets = batch.iter().map(|&i| train_set.targets[i]);
            accumulate_batch(&params, inputs, targets, scale, &mut grads, &mut ws);
            adam_step(&mut params, &grads, &mut state, &adam);
            report.total_iterations += 1;
        }

        let train_loss = evaluate_loss(&params, train_set);
        report.train_loss.push(train_loss);
        let monitored = match (val_set, report.val_loss.as_mut()) {
            (Some(val), Some(curve)) => {
                let v = evaluate_loss(&params, val);
                curve.push(v);
                v
            }
            _ => train_loss,
        };
        if monitored < best_loss {
            best_loss = monitored;
            report.best_epoch = epoch;
            if matches!(config.early_stopping, Some(EarlyStopping { restore_best: true, .. })) {
                best_params = Some(params.clone());
            }
        }
        on_epoch(epoch, &params, &report);
        if let Some(stopping) = config.early_stopping {
            if epoch - report.best_epoch >= stopping.patience {
                report.stopped_early = epoch < config.epochs;
                break;
            }
        }
    }

    if let Some(best) = best_params {
        params = best;
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, target: impl Fn(&[f64]) -> f64) -> Samples {
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                vec![t, (3.0 * t).fract(), (7.0 * t).fract()]
            })
            .collect();
        let targets = inputs.iter().map(|x| target(x)).collect();
        Samples::new(inputs, targets)
    }

    #[test]
    fn iteration_arithmetic() {
        assert_eq!(iterations_per_epoch(603, 50), 13);
        assert_eq!(603 % 50, 3);
        assert_eq!(iterations_per_epoch(50, 50), 1);
    }

    #[test]
    fn constant_target_is_learned() {
        let data = toy(603, |_| 0.5);
        let arch = Architecture::new(3, vec![4]).unwrap();
        let config = TrainConfig { epochs: 200, batch_size: 50, ..Default::default() };
        let (_, report) = train(&data, None, &arch, &config).unwrap();
        assert!(*report.train_loss.last().unwrap() < 1e-6, "{:?}", report.train_loss.last());
        assert_eq!(report.total_iterations, 200 * 13);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy(40, |x| 0.2 + 0.5 * x[0]);
        let arch = Architecture::new(3, vec![5, 3]).unwrap();
        let config = TrainConfig { epochs: 20, batch_size: 7, seed: 3, ..Default::default() };
        let a = train(&data, Some(&data), &arch, &config).unwrap();
        let b = train(&data, Some(&data), &arch, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.val_loss.as_ref().unwrap().len(), 20);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = toy(20, |_| 0.5);
        let arch = Architecture::new(3, vec![2]).unwrap();
        let config = TrainConfig { epochs: 1, batch_size: 5, ..Default::default() };
        assert_eq!(train(&Samples::default(), None, &arch, &config), Err(NnError::EmptyTrainingSet));
        let es = TrainConfig { early_stopping: Some(EarlyStopping::default()), ..config.clone() };
        assert_eq!(train(&data, None, &arch, &es), Err(NnError::ValidationRequired));
        let big = TrainConfig { batch_size: 21, ..config.clone() };
        assert!(matches!(train(&data, None, &arch, &big), Err(NnError::InvalidConfig(_))));
        let beta = TrainConfig { beta1: 1.0, ..config.clone() };
        assert!(matches!(train(&data, None, &arch, &beta), Err(NnError::InvalidConfig(_))));
        let wrong = Architecture::new(4, vec![2]).unwrap();
        assert!(matches!(train(&data, None, &wrong, &config), Err(NnError::Shape(_))));
    }

    #[test]
    fn early_stopping_respects_patience() {
        let data = toy(40, |x| 0.3 + 0.4 * x[1]);
        // a validation set with an unrelated target stops improving quickly
        let val = toy(20, |x| 0.9 - 0.8 * x[1]);
        let arch = Architecture::new(3, vec![4]).unwrap();
        let config = TrainConfig {
            epochs: 400,
            batch_size: 8,
            learning_rate: 0.01,
            early_stopping: Some(EarlyStopping { patience: 5, restore_best: true }),
            ..Default::default()
        };
        let (params, report) = train(&data, Some(&val), &arch, &config).unwrap();
        assert!(report.epochs_run() <= report.best_epoch + 5);
        assert!(report.stopped_early);
        let best = report.val_loss.as_ref().unwrap()[report.best_epoch - 1];
        assert_eq!(evaluate_loss(&params, &val), best);
    }
}
