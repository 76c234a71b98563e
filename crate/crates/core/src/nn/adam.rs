use serde::{Deserialize, Serialize};

use super::network::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Parameters,
    pub v: Parameters,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        AdamState { m: Parameters::zeros_like(params), v: Parameters::zeros_like(params), t: 0 }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut Parameters, grads: &Parameters, state: &mut AdamState, config: &AdamConfig) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = *config;
    for (((p, g), m), v) in params.values_mut().zip(grads.values()).zip(state.m.values_mut()).zip(state.v.values_mut()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::Layer;

    fn scalar(value: f64) -> Parameters {
        Parameters { layers: vec![Layer { fan_in: 1, fan_out: 1, weights: vec![value], bias: vec![0.0] }] }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.37);
        let before = p.clone();
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &Parameters::zeros_like(&before), &mut state, &AdamConfig::default());
        assert_eq!(p, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0);
        let mut g = scalar(1.0);
        g.layers[0].bias[0] = 1.0;
        let mut state = AdamState::new(&p);
        let config = AdamConfig { learning_rate: 0.1, ..Default::default() };
        adam_step(&mut p, &g, &mut state, &config);
        // m̂ = v̂ = 1
        assert!((p.layers[0].weights[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!(state.v.values().all(|v| *v >= 0.0));
    }
}
