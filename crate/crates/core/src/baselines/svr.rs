use serde::{Deserialize, Serialize};

use crate::error::BaselineError;
use crate::preprocess::Samples;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrConfig {
    pub c: f64,
    pub gamma: f64,
    pub epsilon_tube: f64,
    pub tol: f64,
    /// Upper bound on optimization passes; one pass is `n` pair updates.
    pub max_passes: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig { c: 1.0, gamma: 1.0 / 12.0, epsilon_tube: 0.01, tol: 1e-3, max_passes: 1000 }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |m: &str| Err(BaselineError::InvalidConfig(m.to_string()));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("C must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(self.epsilon_tube >= 0.0 && self.epsilon_tube.is_finite()) {
            return bad("epsilon_tube must be non-negative");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be non-negative");
        }
        if self.max_passes == 0 {
            return bad("max_passes must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `α − α*` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
}

impl SvrModel {
    pub fn check(&self, c: Option<f64>) -> Result<(), String> {
        if self.support_vectors.len() != self.coefficients.len() {
            return Err("support vector and coefficient counts differ".into());
        }
        if !self.bias.is_finite() || !(self.gamma > 0.0) {
            return Err("bias must be finite and gamma positive".into());
        }
        if let Some(c) = c {
            if self.coefficients.iter().any(|b| b.abs() > c) {
                return Err("dual coefficient outside [-C, C]".into());
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrReport {
    pub converged: bool,
    pub iterations: usize,
    /// Largest KKT violation when the solver stopped.
    pub final_violation: f64,
    /// Dual objective after each completed pass, plus the final value.
    pub objective_trace: Vec<f64>,
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dual objective `Σβy − εΣ|β| − ½ βᵀKβ`, given `g = y − Kβ`.
pub fn dual_objective(beta: &[f64], targets: &[f64], g: &[f64], epsilon: f64) -> f64 {
    beta.iter()
        .zip(targets)
        .zip(g)
        .map(|((b, y), g)| b * y - epsilon * b.abs() - 0.5 * b * (y - g))
        .sum()
}

fn sign_right(b: f64) -> f64 {
    if b >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn sign_left(b: f64) -> f64 {
    if b > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Objective gain of `β_i += t, β_j −= t`.
fn pair_gain(t: f64, bi: f64, bj: f64, dg: f64, eta: f64, eps: f64) -> f64 {
    t * dg - 0.5 * eta * t * t - eps * ((bi + t).abs() - bi.abs() + (bj - t).abs() - bj.abs())
}

/// Exact maximizer of the piecewise-concave pair gain over `[lo, hi]`.
fn best_step(bi: f64, bj: f64, dg: f64, eta: f64, eps: f64, lo: f64, hi: f64) -> f64 {
    let mut knots = vec![lo, hi];
    for k in [-bi, bj] {
        if k > lo && k < hi {
            knots.push(k);
        }
    }
    knots.sort_by(f64::total_cmp);
    let mut candidates = knots.clone();
    candidates.push(0.0);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a || eta <= 1e-12 {
            continue;
        }
        let mid = a + (b - a) / 2.0;
        let si = if bi + mid >= 0.0 { 1.0 } else { -1.0 };
        let sj = if bj - mid >= 0.0 { 1.0 } else { -1.0 };
        let t = (dg - eps * si + eps * sj) / eta;
        candidates.push(t.clamp(a, b));
    }
    let mut best = (0.0, 0.0);
    for t in candidates {
        let gain = pair_gain(t, bi, bj, dg, eta, eps);
        if gain > best.1 {
            best = (t, gain);
        }
    }
    best.0
}

/// Solver state exposed to observers after every pair update.
pub struct SvrState<'a> {
    pub iteration: usize,
    pub beta: &'a [f64],
    pub objective: f64,
}

pub fn svr_train(samples: &Samples, config: &SvrConfig) -> Result<(SvrModel, SvrReport), BaselineError> {
    svr_train_observed(samples, config, |_| {})
}

/// ε-SVR by pairwise coordinate ascent on the dual.
///
/// Each step picks the maximal violating pair and maximizes the objective
/// exactly along the feasible line, so the objective never decreases and
/// every coefficient stays in `[−C, C]`.
pub fn svr_train_observed(
    samples: &Samples,
    config: &SvrConfig,
    mut observer: impl FnMut(&SvrState),
) -> Result<(SvrModel, SvrReport), BaselineError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(BaselineError::EmptyTrainingSet);
    }
    let n = samples.len();
    let x = &samples.inputs;
    let y = &samples.targets;
    if x.iter().any(|v| v.len() != samples.dim()) {
        return Err(BaselineError::Shape("ragged inputs".into()));
    }
    let (c, eps, gamma) = (config.c, config.epsilon_tube, config.gamma);

    let mut beta = vec![0.0; n];
    let mut g = y.clone();
    let mut row_i = vec![0.0; n];
    let mut row_j = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let max_iterations = config.max_passes.saturating_mul(n);

    let select = |beta: &[f64], g: &[f64]| {
        let mut up = (f64::NEG_INFINITY, usize::MAX);
        let mut down = (f64::INFINITY, usize::MAX);
        for k in 0..n {
            if beta[k] < c {
                let u = g[k] - eps * sign_right(beta[k]);
                if u > up.0 {
                    up = (u, k);
                }
            }
            if beta[k] > -c {
                let d = g[k] - eps * sign_left(beta[k]);
                if d < down.0 {
                    down = (d, k);
                }
            }
        }
        (up, down)
    };

    let (violation, converged) = loop {
        let ((up, i), (down, j)) = select(&beta, &g);
        let violation = (up - down).max(0.0);
        if violation <= config.tol || i == j {
            break (violation, true);
        }
        if iterations >= max_iterations {
            break (violation, false);
        }
        for k in 0..n {
            row_i[k] = rbf(&x[i], &x[k], gamma);
            row_j[k] = rbf(&x[j], &x[k], gamma);
        }
        let eta = (row_i[i] + row_j[j] - 2.0 * row_i[j]).max(0.0);
        let lo = (-c - beta[i]).max(beta[j] - c);
        let hi = (c - beta[i]).min(beta[j] + c);
        let t = best_step(beta[i], beta[j], g[i] - g[j], eta, eps, lo, hi);
        iterations += 1;
        if t == 0.0 {
            // numerically stuck on this pair
            break (violation, false);
        }
        beta[i] = (beta[i] + t).clamp(-c, c);
        beta[j] = (beta[j] - t).clamp(-c, c);
        for k in 0..n {
            g[k] -= t * (row_i[k] - row_j[k]);
        }
        let objective = dual_objective(&beta, y, &g, eps);
        observer(&SvrState { iteration: iterations, beta: &beta, objective });
        if iterations % n == 0 {
            trace.push(objective);
        }
    };
    trace.push(dual_objective(&beta, y, &g, eps));

    let free: Vec<f64> = (0..n)
        .filter(|&k| beta[k] != 0.0 && beta[k].abs() < c)
        .map(|k| g[k] - eps * beta[k].signum())
        .collect();
    let bias = if free.is_empty() {
        let ((up, _), (down, _)) = select(&beta, &g);
        match (up.is_finite(), down.is_finite()) {
            (true, true) => (up + down) / 2.0,
            (true, false) => up,
            (false, true) => down,
            (false, false) => 0.0,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };

    let (support_vectors, coefficients) = (0..n).filter(|&k| beta[k] != 0.0).map(|k| (x[k].clone(), beta[k])).unzip();
    let model = SvrModel { support_vectors, coefficients, bias, gamma };
    let report = SvrReport { converged, iterations, final_violation: violation, objective_trace: trace };
    Ok((model, report))
}

pub fn svr_predict(model: &SvrModel, x: &[f64]) -> f64 {
    model.support_vectors.iter().zip(&model.coefficients).map(|(sv, c)| c * rbf(sv, x, model.gamma)).sum::<f64>()
        + model.bias
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(n: usize) -> Samples {
        let inputs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, ((i * 5) % n) as f64 / n as f64]).collect();
        let targets = inputs.iter().map(|x| 0.5 + 0.3 * (4.0 * x[0]).sin() - 0.1 * x[1]).collect();
        Samples::new(inputs, targets)
    }

    #[test]
    fn kernel_is_one_at_zero_distance() {
        assert_eq!(rbf(&[0.3, 0.9], &[0.3, 0.9], 7.0), 1.0);
        assert!((rbf(&[0.0], &[1.0], 2.0) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn wide_tube_has_no_support_vectors() {
        let data = Samples::new(vec![vec![0.0], vec![0.5], vec![1.0]], vec![0.40, 0.45, 0.43]);
        let config = SvrConfig { epsilon_tube: 0.1, ..Default::default() };
        let (model, report) = svr_train(&data, &config).unwrap();
        assert!(model.support_vectors.is_empty());
        assert!(report.converged);
        for y in &data.targets {
            assert!((y - model.bias).abs() <= 0.1);
        }
        assert_eq!(svr_predict(&model, &[0.2]), model.bias);
    }

    #[test]
    fn lone_support_vector_prediction() {
        let model = SvrModel { support_vectors: vec![vec![0.1, 0.2]], coefficients: vec![0.7], bias: 0.05, gamma: 3.0 };
        assert_eq!(svr_predict(&model, &[0.1, 0.2]), 0.7 + 0.05);
    }

    #[test]
    fn objective_is_monotone_and_box_holds() {
        let data = wave(40);
        let config = SvrConfig { c: 0.5, gamma: 2.0, epsilon_tube: 0.02, ..Default::default() };
        let mut last = 0.0;
        let mut steps = 0;
        let (model, report) = svr_train_observed(&data, &config, |s| {
            assert!(s.beta.iter().all(|b| b.abs() <= config.c));
            assert!(s.objective >= last - 1e-12, "{} < {last}", s.objective);
            assert!(s.beta.iter().sum::<f64>().abs() < 1e-9);
            last = s.objective;
            steps += 1;
        })
        .unwrap();
        assert!(report.converged, "{report:?}");
        assert_eq!(steps, report.iterations);
        assert!(model.check(Some(config.c)).is_ok());
        let mse: f64 = data
            .inputs
            .iter()
            .zip(&data.targets)
            .map(|(x, y)| (svr_predict(&model, x) - y).powi(2))
            .sum::<f64>()
            / 40.0;
        assert!(mse < 0.002, "{mse}");
    }

    #[test]
    fn tiny_perturbation_changes_little() {
        let data = wave(20);
        let (model, _) = svr_train(&data, &SvrConfig::default()).unwrap();
        let x = [0.31, 0.62];
        let moved = [0.31 + 1e-9, 0.62 - 1e-9];
        assert!((svr_predict(&model, &x) - svr_predict(&model, &moved)).abs() < 1e-6);
    }

    #[test]
    fn pass_limit_reports_non_convergence() {
        let data = wave(30);
        let config = SvrConfig { max_passes: 1, tol: 0.0, epsilon_tube: 0.0, ..Default::default() };
        let (_, report) = svr_train(&data, &config).unwrap();
        assert!(!report.converged);
        assert!(report.final_violation > 0.0);
    }
}
