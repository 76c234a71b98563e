mod common;

use common::{cart_oracle, same_tree, svr_dual, svr_grid_optimum};
use phosforge_core::baselines::forest::grow_tree;
use phosforge_core::baselines::{rf_predict, rf_train, svr_predict, svr_train, svr_train_observed, ForestConfig, SvrConfig};
use phosforge_core::Samples;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Grid points `(x1, x2, y)`.
fn grid() -> Vec<[f64; 3]> {
    let mut points = Vec::new();
    for x1 in [0.0, 1.0, 2.0] {
        for x2 in [0.0, 1.0] {
            for y in [0.0, 1.0, 3.0] {
                points.push([x1, x2, y]);
            }
        }
    }
    points
}

/// Every multiset of grid points with 1 to `max_len` members.
fn for_each_multiset(points: &[[f64; 3]], max_len: usize, f: &mut impl FnMut(&[[f64; 3]])) {
    fn rec(points: &[[f64; 3]], start: usize, max_len: usize, current: &mut Vec<[f64; 3]>, f: &mut impl FnMut(&[[f64; 3]])) {
        if !current.is_empty() {
            f(current);
        }
        if current.len() == max_len {
            return;
        }
        for i in start..points.len() {
            current.push(points[i]);
            rec(points, i, max_len, current, f);
            current.pop();
        }
    }
    rec(points, 0, max_len, &mut Vec::new(), f);
}

fn to_samples(points: &[[f64; 3]]) -> Samples {
    Samples::new(points.iter().map(|p| vec![p[0], p[1]]).collect(), points.iter().map(|p| p[2]).collect())
}

#[test]
fn single_tree_matches_exhaustive_cart_up_to_six_points() {
    let config = ForestConfig { n_trees: 1, bootstrap: false, ..Default::default() };
    let mut count = 0;
    for_each_multiset(&grid(), 6, &mut |points| {
        let data = to_samples(points);
        let rows: Vec<usize> = (0..data.len()).collect();
        let tree = grow_tree(&data, &rows, &config, 0);
        let oracle = cart_oracle(&data, &rows);
        assert!(same_tree(&tree, &oracle, 1e-12), "{points:?}\n{tree:?}\n{oracle:?}");
        count += 1;
    });
    assert_eq!(count, 134_595);
}

#[test]
fn five_point_forest_matches_oracle() {
    let data = Samples::new(
        vec![vec![0.1, 0.9], vec![0.4, 0.2], vec![0.35, 0.5], vec![0.8, 0.1], vec![0.6, 0.7]],
        vec![0.2, 0.5, 0.45, 0.9, 0.3],
    );
    let config = ForestConfig { n_trees: 1, bootstrap: false, ..Default::default() };
    let forest = rf_train(&data, &config).unwrap();
    assert!(same_tree(&forest.trees[0], &cart_oracle(&data, &[0, 1, 2, 3, 4]), 1e-15));
}

#[test]
fn forest_prediction_within_leaf_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let inputs: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let targets = inputs.iter().map(|x| x[0] * x[1] + 0.1 * x[2]).collect();
    let data = Samples::new(inputs, targets);
    let forest = rf_train(&data, &ForestConfig { n_trees: 15, max_depth: Some(4), seed: 3, ..Default::default() }).unwrap();
    for _ in 0..200 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..1.5)).collect();
        let leaves: Vec<f64> = forest.trees.iter().flat_map(|t| t.leaf_values()).collect();
        let lo = leaves.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = leaves.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y = rf_predict(&forest, &x);
        assert!(y >= lo && y <= hi);
    }
}

#[test]
fn svr_matches_grid_search_on_four_points() {
    let x = vec![vec![0.0], vec![0.3], vec![0.7], vec![1.0]];
    let y = vec![0.1, 0.5, 0.4, 0.9];
    let config = SvrConfig { c: 0.1, gamma: 1.0, epsilon_tube: 0.01, tol: 1e-9, max_passes: 100_000 };
    let data = Samples::new(x.clone(), y.clone());
    let mut beta = vec![0.0; 4];
    let (model, report) = svr_train_observed(&data, &config, |s| beta.copy_from_slice(s.beta)).unwrap();
    assert!(report.converged);
    let solver = svr_dual(&beta, &x, &y, config.gamma, config.epsilon_tube);
    assert!((solver - report.objective_trace.last().unwrap()).abs() < 1e-12);
    let grid = svr_grid_optimum(&x, &y, config.gamma, config.epsilon_tube, config.c, 1e-3);
    assert!((solver - grid).abs() <= 1e-3, "solver {solver} grid {grid}");
    assert!(solver >= grid - 1e-12);
    assert!(model.check(Some(config.c)).is_ok());
}

#[test]
fn svr_objective_non_decreasing_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..25 {
        let dim = rng.random_range(1..=4);
        let inputs: Vec<Vec<f64>> = (0..20).map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let targets: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
        let data = Samples::new(inputs, targets);
        let config = SvrConfig {
            c: rng.random_range(0.05..5.0),
            gamma: rng.random_range(0.1..10.0),
            epsilon_tube: rng.random_range(0.0..0.1),
            ..Default::default()
        };
        let mut last = 0.0;
        let (_, report) = svr_train_observed(&data, &config, |s| {
            assert!(s.objective >= last - 1e-12, "case {case}: {} after {last}", s.objective);
            assert!(s.beta.iter().all(|b| b.abs() <= config.c));
            last = s.objective;
        })
        .unwrap();
        for w in report.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }
}

#[test]
fn svr_wide_tube_on_random_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let targets: Vec<f64> = (0..20).map(|_| 0.4 + rng.random_range(0.0..0.05)).collect();
    let data = Samples::new(inputs, targets);
    let config = SvrConfig { epsilon_tube: 0.06, ..Default::default() };
    let (model, _) = svr_train(&data, &config).unwrap();
    assert!(model.support_vectors.is_empty());
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        assert!((svr_predict(&model, x) - y).abs() <= config.epsilon_tube);
    }
}
