//! Brute-force reference implementations shared by the integration and
//! acceptance tests.

#![allow(dead_code)]

use phosforge_core::baselines::TreeNode;
use phosforge_core::Samples;

/// Type-7 quantile by sorting and linear interpolation.
pub fn quantile_oracle(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= s.len() {
        return s[lo];
    }
    s[lo] + (h - lo as f64) * (s[lo + 1] - s[lo])
}

/// Calls `f` on every list of `len` values drawn from `0..base`.
pub fn for_each_integer_list(len: usize, base: u32, mut f: impl FnMut(&[f64])) {
    let mut digits = vec![0u32; len];
    let mut values = vec![0.0; len];
    loop {
        f(&values);
        let mut k = 0;
        loop {
            if k == len {
                return;
            }
            digits[k] += 1;
            if digits[k] < base {
                values[k] = digits[k] as f64;
                break;
            }
            digits[k] = 0;
            values[k] = 0.0;
            k += 1;
        }
    }
}

fn sse(values: &[f64]) -> f64 {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Full-depth CART tree grown by enumerating every feature and every cut
/// between distinct values, scoring children by their summed SSE directly.
pub fn cart_oracle(samples: &Samples, rows: &[usize]) -> TreeNode {
    let targets: Vec<f64> = rows.iter().map(|&i| samples.targets[i]).collect();
    let value = targets.iter().sum::<f64>() / targets.len() as f64;
    if rows.len() < 2 || targets.iter().all(|t| *t == targets[0]) {
        return TreeNode::Leaf { value };
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for feature in 0..samples.dim() {
        let mut cuts: Vec<f64> = rows.iter().map(|&i| samples.inputs[i][feature]).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for pair in cuts.windows(2) {
            let left: Vec<f64> =
                rows.iter().filter(|&&i| samples.inputs[i][feature] <= pair[0]).map(|&i| samples.targets[i]).collect();
            let right: Vec<f64> =
                rows.iter().filter(|&&i| samples.inputs[i][feature] > pair[0]).map(|&i| samples.targets[i]).collect();
            let cost = sse(&left) + sse(&right);
            let threshold = pair[0] + (pair[1] - pair[0]) / 2.0;
            let better = match best {
                None => true,
                Some((c, _, _)) => cost < c - 1e-9 * c.abs().max(1e-12),
            };
            if better {
                best = Some((cost, feature, threshold));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return TreeNode::Leaf { value };
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| samples.inputs[i][feature] <= threshold);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(cart_oracle(samples, &l)),
        right: Box::new(cart_oracle(samples, &r)),
    }
}

/// Structural equality with leaf values compared to `tol`.
pub fn same_tree(a: &TreeNode, b: &TreeNode, tol: f64) -> bool {
    match (a, b) {
        (TreeNode::Leaf { value: x }, TreeNode::Leaf { value: y }) => (x - y).abs() <= tol,
        (
            TreeNode::Split { feature: f1, threshold: t1, left: l1, right: r1 },
            TreeNode::Split { feature: f2, threshold: t2, left: l2, right: r2 },
        ) => f1 == f2 && t1 == t2 && same_tree(l1, l2, tol) && same_tree(r1, r2, tol),
        _ => false,
    }
}

/// ε-SVR dual objective for explicit coefficients.
pub fn svr_dual(beta: &[f64], x: &[Vec<f64>], y: &[f64], gamma: f64, eps: f64) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            quad += beta[i] * beta[j] * (-gamma * d2).exp();
        }
    }
    beta.iter().zip(y).map(|(b, y)| b * y - eps * b.abs()).sum::<f64>() - 0.5 * quad
}

/// Best dual objective over a grid of step `step` on `[−C, C]` for the
/// first `n − 1` coefficients, with the last fixed by `Σβ = 0`.
pub fn svr_grid_optimum(x: &[Vec<f64>], y: &[f64], gamma: f64, eps: f64, c: f64, step: f64) -> f64 {
    let n = y.len();
    let k = (c / step).round() as i64;
    let mut kernel = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            kernel[i][j] = (-gamma * d2).exp();
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![-k; n - 1];
    let mut beta = vec![0.0; n];
    loop {
        let mut sum = 0i64;
        for (b, &i) in beta.iter_mut().zip(&idx) {
            *b = i as f64 * step;
            sum += i;
        }
        if sum.abs() <= k {
            beta[n - 1] = -(sum as f64) * step;
            let mut w = 0.0;
            for i in 0..n {
                w += beta[i] * y[i] - eps * beta[i].abs();
                for j in 0..n {
                    w -= 0.5 * beta[i] * beta[j] * kernel[i][j];
                }
            }
            best = best.max(w);
        }
        let mut d = 0;
        loop {
            if d == n - 1 {
                return best;
            }
            idx[d] += 1;
            if idx[d] <= k {
                break;
            }
            idx[d] = -k;
            d += 1;
        }
    }
}
