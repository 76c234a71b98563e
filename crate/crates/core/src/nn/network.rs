use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::FEATURE_COUNT;
use crate::error::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Layer widths of a fully connected sigmoid network with one output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self, NnError> {
        let arch = Architecture { input_dim, hidden, output_dim: 1, activation: Activation::Sigmoid };
        arch.validate()?;
        Ok(arch)
    }

    /// 12-16-8-1.
    pub fn ann1() -> Self {
        Self::new(FEATURE_COUNT, vec![16, 8]).expect("valid")
    }

    /// 12-144-256-64-1.
    pub fn ann2() -> Self {
        Self::new(FEATURE_COUNT, vec![144, 256, 64]).expect("valid")
    }

    /// 12-128-128-128-64-1.
    pub fn ann3() -> Self {
        Self::new(FEATURE_COUNT, vec![128, 128, 128, 64]).expect("valid")
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.hidden.is_empty() {
            return Err(NnError::InvalidArchitecture("at least one hidden layer is required".into()));
        }
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(NnError::InvalidArchitecture("every layer needs at least one unit".into()));
        }
        if self.output_dim != 1 {
            return Err(NnError::InvalidArchitecture("exactly one output unit is supported".into()));
        }
        Ok(())
    }

    /// Input, hidden and output widths in order.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend(&self.hidden);
        sizes.push(self.output_dim);
        sizes
    }

    /// Hidden units only (the convention used when quoting neuron counts).
    pub fn hidden_neurons(&self) -> usize {
        self.hidden.iter().sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sizes: Vec<String> = self.layer_sizes().iter().map(ToString::to_string).collect();
        f.write_str(&sizes.join("-"))
    }
}

/// One dense layer. `weights` is row-major, `fan_out` rows of `fan_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer { fan_in, fan_out, weights: vec![0.0; fan_in * fan_out], bias: vec![0.0; fan_out] }
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.fan_in + col]
    }
}

/// Weights and biases of every layer; gradients and Adam moments share the type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<Layer>,
}

impl Parameters {
    pub fn zeros(arch: &Architecture) -> Self {
        let sizes = arch.layer_sizes();
        Parameters { layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() }
    }

    pub fn zeros_like(other: &Parameters) -> Self {
        Parameters { layers: other.layers.iter().map(|l| Layer::zeros(l.fan_in, l.fan_out)).collect() }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.fan_in)
    }

    /// All entries, layer by layer, weights before bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn fill(&mut self, value: f64) {
        self.values_mut().for_each(|v| *v = value);
    }

    /// Checks shapes against an architecture and that every entry is finite.
    pub fn check(&self, arch: &Architecture) -> Result<(), NnError> {
        let sizes = arch.layer_sizes();
        if self.layers.len() + 1 != sizes.len() {
            return Err(NnError::Shape(format!(
                "{} layers for architecture {arch}",
                self.layers.len()
            )));
        }
        for (k, (layer, w)) in self.layers.iter().zip(sizes.windows(2)).enumerate() {
            if layer.fan_in != w[0]
                || layer.fan_out != w[1]
                || layer.weights.len() != w[0] * w[1]
                || layer.bias.len() != w[1]
            {
                return Err(NnError::Shape(format!("layer {k} does not match {}x{}", w[1], w[0])));
            }
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(NnError::Shape("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform weights with limit √(6 / (fan_in + fan_out)), zero biases.
pub fn init_params(arch: &Architecture, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::zeros(arch);
    for layer in &mut params.layers {
        let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..=limit);
        }
    }
    params
}

/// Pre-activations and activations of a forward pass. `activations[0]` is
/// the input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cache {
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl Cache {
    pub fn for_params(params: &Parameters) -> Self {
        let mut cache = Cache::default();
        cache.activations.push(vec![0.0; params.input_dim()]);
        for layer in &params.layers {
            cache.pre_activations.push(vec![0.0; layer.fan_out]);
            cache.activations.push(vec![0.0; layer.fan_out]);
        }
        cache
    }

    pub fn output(&self) -> f64 {
        self.activations.last().and_then(|a| a.first()).copied().unwrap_or(f64::NAN)
    }
}

pub fn forward(params: &Parameters, x: &[f64]) -> (f64, Cache) {
    let mut cache = Cache::for_params(params);
    let y = forward_into(params, x, &mut cache);
    (y, cache)
}

/// Forward pass reusing `cache` buffers (shaped by [`Cache::for_params`]).
pub fn forward_into(params: &Parameters, x: &[f64], cache: &mut Cache) -> f64 {
    debug_assert_eq!(x.len(), params.input_dim());
    cache.activations[0].copy_from_slice(x);
    for (l, layer) in params.layers.iter().enumerate() {
        let (before, after) = cache.activations.split_at_mut(l + 1);
        let input = &before[l];
        let out = &mut after[0];
        let pre = &mut cache.pre_activations[l];
        for (i, row) in layer.weights.chunks_exact(layer.fan_in).enumerate() {
            let z = layer.bias[i] + dot(row, input);
            pre[i] = z;
            out[i] = sigmoid(z);
        }
    }
    cache.output()
}

/// Output only, without keeping intermediate activations.
pub fn predict_one(params: &Parameters, x: &[f64]) -> f64 {
    let mut current = x.to_vec();
    for layer in &params.layers {
        current = layer
            .weights
            .chunks_exact(layer.fan_in)
            .zip(&layer.bias)
            .map(|(row, b)| sigmoid(b + dot(row, &current)))
            .collect();
    }
    current[0]
}

/// Dot product with four fixed-order partial sums (vectorizes, stays
/// deterministic).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        for lane in 0..4 {
            acc[lane] += a[4 * k + lane] * b[4 * k + lane];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Mean squared error of predictions against targets.
pub fn loss(y_hat: &[f64], y: &[f64]) -> Result<f64, NnError> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(NnError::Shape(format!("loss over {} predictions and {} targets", y_hat.len(), y.len())));
    }
    Ok(y_hat.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / y.len() as f64)
}

/// Scratch space for repeated backward passes.
#[derive(Debug, Clone)]
pub struct BackwardBuffers {
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl BackwardBuffers {
    pub fn for_params(params: &Parameters) -> Self {
        let widest = params.layers.iter().map(|l| l.fan_in.max(l.fan_out)).max().unwrap_or(0);
        BackwardBuffers { delta: Vec::with_capacity(widest), delta_prev: Vec::with_capacity(widest) }
    }
}

/// Gradient of the single-sample squared error `(ŷ − y)²`.
pub fn backward(params: &Parameters, cache: &Cache, y: f64) -> Parameters {
    let mut grads = Parameters::zeros_like(params);
    let mut buffers = BackwardBuffers::for_params(params);
    accumulate_backward(params, cache, y, 1.0, &mut grads, &mut buffers);
    grads
}

/// Adds `scale ·` the single-sample gradient into `grads`.
pub fn accumulate_backward(
    params: &Parameters,
    cache: &Cache,
    y: f64,
    scale: f64,
    grads: &mut Parameters,
    buffers: &mut BackwardBuffers,
) {
    let y_hat = cache.output();
    let mut delta = std::mem::take(&mut buffers.delta);
    let mut prev = std::mem::take(&mut buffers.delta_prev);
    delta.clear();
    delta.push(scale * 2.0 * (y_hat - y) * y_hat * (1.0 - y_hat));

    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let grad = &mut grads.layers[l];
        let input = &cache.activations[l];
        for (i, d) in delta.iter().enumerate() {
            grad.bias[i] += d;
            let row = &mut grad.weights[i * layer.fan_in..(i + 1) * layer.fan_in];
            for (g, a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
        }
        if l == 0 {
            break;
        }
        prev.clear();
        prev.resize(layer.fan_in, 0.0);
        for (i, d) in delta.iter().enumerate() {
            let row = &layer.weights[i * layer.fan_in..(i + 1) * layer.fan_in];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += w * d;
            }
        }
        for (p, a) in prev.iter_mut().zip(input) {
            *p *= a * (1.0 - a);
        }
        std::mem::swap(&mut delta, &mut prev);
    }
    buffers.delta = delta;
    buffers.delta_prev = prev;
}

/// Activations and deltas for a whole mini-batch, stored sample-major.
#[derive(Debug, Clone, Default)]
pub struct BatchWorkspace {
    activations: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl BatchWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Network outputs of the last [`forward_batch`] call.
    pub fn outputs(&self) -> &[f64] {
        self.activations.last().map_or(&[], Vec::as_slice)
    }
}

/// Forward pass over several samples at once. Each output equals
/// [`predict_one`] on the same sample bit for bit; only the loop order
/// differs, so each weight row is read once per batch.
pub fn forward_batch<'a>(params: &Parameters, inputs: impl ExactSizeIterator<Item = &'a [f64]>, ws: &mut BatchWorkspace) {
    let batch = inputs.len();
    ws.activations.resize_with(params.layers.len() + 1, Vec::new);
    let first = &mut ws.activations[0];
    first.clear();
    for x in inputs {
        first.extend_from_slice(x);
    }
    for (l, layer) in params.layers.iter().enumerate() {
        let (before, after) = ws.activations.split_at_mut(l + 1);
        let input = &before[l];
        let out = &mut after[0];
        out.clear();
        out.resize(batch * layer.fan_out, 0.0);
        for (i, row) in layer.weights.chunks_exact(layer.fan_in).enumerate() {
            for (b, a) in input.chunks_exact(layer.fan_in).enumerate() {
                out[b * layer.fan_out + i] = sigmoid(layer.bias[i] + dot(row, a));
            }
        }
    }
}

/// Adds `scale ·` the summed per-sample gradients of a batch into `grads`.
///
/// Every parameter receives its per-sample terms in sample order, the same
/// additions [`accumulate_backward`] performs one sample at a time.
pub fn accumulate_batch<'a>(
    params: &Parameters,
    inputs: impl ExactSizeIterator<Item = &'a [f64]>,
    targets: impl Iterator<Item = f64>,
    scale: f64,
    grads: &mut Parameters,
    ws: &mut BatchWorkspace,
) {
    forward_batch(params, inputs, ws);
    let mut delta = std::mem::take(&mut ws.delta);
    let mut prev = std::mem::take(&mut ws.delta_prev);
    delta.clear();
    delta.extend(ws.outputs().iter().zip(targets).map(|(&y_hat, y)| scale * 2.0 * (y_hat - y) * y_hat * (1.0 - y_hat)));
    let batch = delta.len();

    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let (fan_in, fan_out) = (layer.fan_in, layer.fan_out);
        let grad = &mut grads.layers[l];
        let input = &ws.activations[l];
        for i in 0..fan_out {
            let row = &mut grad.weights[i * fan_in..(i + 1) * fan_in];
            for b in 0..batch {
                let d = delta[b * fan_out + i];
                grad.bias[i] += d;
                for (g, a) in row.iter_mut().zip(&input[b * fan_in..(b + 1) * fan_in]) {
                    *g += d * a;
                }
            }
        }
        if l == 0 {
            break;
        }
        prev.clear();
        prev.resize(batch * fan_in, 0.0);
        for i in 0..fan_out {
            let row = &layer.weights[i * fan_in..(i + 1) * fan_in];
            for b in 0..batch {
                let d = delta[b * fan_out + i];
                for (p, w) in prev[b * fan_in..(b + 1) * fan_in].iter_mut().zip(row) {
                    *p += w * d;
                }
            }
        }
        for (p, a) in prev.iter_mut().zip(input) {
            *p *= a * (1.0 - a);
        }
        std::mem::swap(&mut delta, &mut prev);
    }
    ws.delta = delta;
    ws.delta_prev = prev;
}

/// Central-difference gradient of `(ŷ − y)²` with step `h`.
pub fn numeric_gradient(params: &Parameters, x: &[f64], y: f64, h: f64) -> Parameters {
    assert!(h > 0.0, "step must be positive");
    let sample_loss = |p: &Parameters| {
        let e = predict_one(p, x) - y;
        e * e
    };
    let mut probe = params.clone();
    let mut grads = Parameters::zeros_like(params);
    let n = params.len();
    for k in 0..n {
        let original = *nth_mut(&mut probe, k);
        *nth_mut(&mut probe, k) = original + h;
        let plus = sample_loss(&probe);
        *nth_mut(&mut probe, k) = original - h;
        let minus = sample_loss(&probe);
        *nth_mut(&mut probe, k) = original;
        *nth_mut(&mut grads, k) = (plus - minus) / (2.0 * h);
    }
    grads
}

fn nth_mut(params: &mut Parameters, mut k: usize) -> &mut f64 {
    for layer in &mut params.layers {
        if k < layer.weights.len() {
            return &mut layer.weights[k];
        }
        k -= layer.weights.len();
        if k < layer.bias.len() {
            return &mut layer.bias[k];
        }
        k -= layer.bias.len();
    }
    panic!("parameter index out of range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_limits_and_zero_bias() {
        let arch = Architecture::ann3();
        let p = init_params(&arch, 42);
        assert_eq!(p, init_params(&arch, 42));
        assert_ne!(p, init_params(&arch, 43));
        let first = &p.layers[0];
        let limit = (6.0f64 / 140.0).sqrt();
        assert!((limit - 0.2070).abs() < 1e-4);
        assert!(first.weights.iter().all(|w| w.abs() <= limit));
        assert!(p.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        assert_eq!(p.len(), arch.parameter_count());
    }

    #[test]
    fn architecture_presets() {
        assert_eq!(Architecture::ann1().to_string(), "12-16-8-1");
        assert_eq!(Architecture::ann2().to_string(), "12-144-256-64-1");
        assert_eq!(Architecture::ann3().to_string(), "12-128-128-128-64-1");
        assert_eq!(
            [Architecture::ann1(), Architecture::ann2(), Architecture::ann3()].map(|a| a.hidden_neurons()),
            [24, 464, 448]
        );
        assert!(Architecture::new(12, vec![]).is_err());
        assert!(Architecture::new(12, vec![4, 0]).is_err());
    }

    #[test]
    fn zero_network_outputs_half() {
        let p = Parameters::zeros(&Architecture::ann2());
        let x = [0.3; 12];
        let (y, cache) = forward(&p, &x);
        assert_eq!(y, 0.5);
        assert!(cache.activations[1..].iter().flatten().all(|a| *a == 0.5));
        assert_eq!(predict_one(&p, &x), 0.5);

        let single = Parameters { layers: vec![Layer::zeros(1, 1)] };
        assert_eq!(forward(&single, &[0.0]).0, 0.5);
    }

    #[test]
    fn closed_form_sigmoid() {
        // z = x1 + x2 = ln 3 gives σ(z) = 3/4
        let layer = Layer { fan_in: 2, fan_out: 1, weights: vec![1.0, 1.0], bias: vec![0.0] };
        let p = Parameters { layers: vec![layer] };
        let ln3 = 3.0f64.ln();
        let (y, cache) = forward(&p, &[ln3 - 0.4, 0.4]);
        assert!((y - 0.75).abs() < 1e-15);
        assert!((cache.pre_activations[0][0] - ln3).abs() < 1e-15);
    }

    #[test]
    fn loss_values() {
        assert_eq!(loss(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((loss(&[0.5], &[0.2]).unwrap() - 0.09).abs() < 1e-15);
        assert!(loss(&[0.5], &[]).is_err());
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let p = init_params(&Architecture::new(3, vec![4]).unwrap(), 1);
        let x = [0.1, 0.5, 0.9];
        let (y_hat, cache) = forward(&p, &x);
        assert!(backward(&p, &cache, y_hat).values().all(|g| *g == 0.0));
    }

    #[test]
    fn output_bias_gradient_by_hand() {
        let p = init_params(&Architecture::new(2, vec![3]).unwrap(), 5);
        let (y_hat, cache) = forward(&p, &[0.2, 0.7]);
        let y = 0.1;
        let g = backward(&p, &cache, y);
        let expected = 2.0 * (y_hat - y) * y_hat * (1.0 - y_hat);
        assert!((g.layers[1].bias[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = init_params(&Architecture::new(4, vec![5, 3]).unwrap(), 9);
        let x = [0.1, 0.4, 0.8, 0.3];
        let (_, cache) = forward(&p, &x);
        let analytic = backward(&p, &cache, 0.9);
        let numeric = numeric_gradient(&p, &x, 0.9, 1e-5);
        for (a, n) in analytic.values().zip(numeric.values()) {
            assert!((a - n).abs() <= 1e-8 + 1e-5 * n.abs(), "{a} vs {n}");
        }
    }

    #[test]
    fn numeric_gradient_is_second_order() {
        // single weight, ŷ = σ(w·x): compare against the closed form
        let x = 0.7;
        let y = 0.2;
        let w = 0.3;
        let p = Parameters { layers: vec![Layer { fan_in: 1, fan_out: 1, weights: vec![w], bias: vec![0.0] }] };
        let s = sigmoid(w * x);
        let exact = 2.0 * (s - y) * s * (1.0 - s) * x;
        let err = |h: f64| (numeric_gradient(&p, &[x], y, h).layers[0].weights[0] - exact).abs();
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e1 < 1e-4);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn shape_check() {
        let arch = Architecture::ann1();
        let mut p = init_params(&arch, 0);
        assert!(p.check(&arch).is_ok());
        assert!(p.check(&Architecture::ann2()).is_err());
        p.layers[1].bias[0] = f64::NAN;
        assert!(p.check(&arch).is_err());
    }

    #[test]
    fn batch_pass_matches_sample_pass_bitwise() {
        let arch = Architecture::new(5, vec![7, 4, 3]).unwrap();
        let params = init_params(&arch, 21);
        let xs: Vec<Vec<f64>> = (0..9).map(|k| (0..5).map(|j| ((k * 5 + j) as f64 * 0.37).sin().abs()).collect()).collect();
        let ys: Vec<f64> = (0..9).map(|k| 0.1 * k as f64).collect();

        let mut one = Parameters::zeros_like(&params);
        let mut cache = Cache::for_params(&params);
        let mut buffers = BackwardBuffers::for_params(&params);
        for (x, y) in xs.iter().zip(&ys) {
            forward_into(&params, x, &mut cache);
            accumulate_backward(&params, &cache, *y, 1.0 / 9.0, &mut one, &mut buffers);
        }
        let mut batched = Parameters::zeros_like(&params);
        let mut ws = BatchWorkspace::new();
        accumulate_batch(&params, xs.iter().map(Vec::as_slice), ys.iter().copied(), 1.0 / 9.0, &mut batched, &mut ws);
        assert_eq!(one, batched);
        for (x, out) in xs.iter().zip(ws.outputs()) {
            assert_eq!(predict_one(&params, x), *out);
        }
    }
}
