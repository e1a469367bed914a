use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::GeneratorSpec;
use crate::forest::ForestParams;

#[test]
fn discovery_by_hand() {
    let selected = vec![vec![0, 1], vec![2, 3, 9], vec![], vec![5]];
    let truth = vec![vec![0, 1, 4], vec![2, 3, 4], vec![0], vec![]];
    let r = discovery_metrics(&selected, &truth).unwrap();
    assert_eq!((r.n_scored, r.n_skipped), (3, 1));
    assert!((r.tpr - (2.0 / 3.0 + 2.0 / 3.0 + 0.0) / 3.0).abs() < 1e-12);
    assert!((r.fdr - (0.0 + 1.0 / 3.0 + 0.0) / 3.0).abs() < 1e-12);
    assert!(discovery_metrics(&selected[..2], &truth).is_err());
}

#[test]
fn scalar_metrics() {
    assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
    assert!((r_squared(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0])).abs() < 1e-15);
    assert_eq!(mean_absolute_error(&[1.0, 4.0], &[2.0, 2.0]), 1.5);
    assert_eq!(accuracy(&[1.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 0.0]), 0.5);
}

fn small_forest() -> Forest {
    let data = GeneratorSpec::linear_switch(600, 6, 2).generate().unwrap().data;
    Forest::fit(data, &ForestParams { n_trees: 6, min_samples_leaf: 3, mtry: Some(6), ..Default::default() }).unwrap()
}

#[test]
fn p_mse_boundary_cases() {
    let f = small_forest();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let probes: Vec<Vec<f64>> = (0..40).map(|_| (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    let all = vec![Subset::all(6); 40];
    assert!(p_mse(&f, &probes, &all, 3).unwrap() < 1e-20);
    // Empty subsets: every projected mean is the bootstrap-weighted mean.
    let k = f.n_trees() as f64;
    let y = f.data().targets();
    let c: f64 = f
        .trees()
        .iter()
        .map(|t| {
            t.bootstrap_counts().iter().zip(y).map(|(&n, y)| f64::from(n) * y).sum::<f64>() / (k * t.bootstrap_size() as f64)
        })
        .sum();
    let expected: f64 = probes.iter().map(|z| (f.predict_value(z).unwrap() - c).powi(2)).sum::<f64>() / 40.0;
    let got = p_mse(&f, &probes, &vec![Subset::empty(); 40], 3).unwrap();
    assert!((got - expected).abs() < 1e-9 * expected.max(1.0));
    assert!(p_mse(&f, &probes, &all[..3], 3).is_err());
}

#[test]
fn conditional_gaussian_matches_closed_form() {
    let cov = crate::data::linear_switch_covariance(5);
    let c = conditional_gaussian(&cov, &[4], &[1.5], &[2, 3]).unwrap();
    let beta = 0.8 / 5.8;
    for k in 0..2 {
        assert!((c.mean[k] - beta * 1.5).abs() < 1e-12);
        assert!((c.cov[(k, k)] - (5.8 - 0.8 * beta)).abs() < 1e-12);
    }
    assert!((c.cov[(0, 1)] - (0.8 - 0.8 * beta)).abs() < 1e-12);
    assert!(conditional_gaussian(&cov, &[4], &[], &[0]).is_err());
    let free = conditional_gaussian(&cov, &[], &[], &[0, 1]).unwrap();
    assert_eq!(free.cov, DMatrix::from_row_slice(2, 2, &[5.8, 0.8, 0.8, 5.8]));
}

#[test]
fn mc_oracle_moments_at_a_million_draws() {
    let spec = GeneratorSpec::linear_switch(10, 20, 0);
    let oracle = McOracle::new(spec, 1_000_000, 9).unwrap();
    // Given X5 = 1 the response is X3 + X4 with a Gaussian law.
    let v = 1.0;
    let beta = 0.8 / 5.8;
    let mean = 2.0 * beta * v;
    let var = 2.0 * (5.8 - 0.8 * beta) + 2.0 * (0.8 - 0.8 * beta);
    let ys = oracle.sample_responses(&[v], &Subset::new(vec![4])).unwrap();
    assert_eq!(ys.len(), 1_000_000);
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    let s2 = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
    // Standard errors: mean ~0.004, variance ~0.02.
    assert!((m - mean).abs() < 0.015, "{m} vs {mean}");
    assert!((s2 - var).abs() < 0.08, "{s2} vs {var}");
    // Fully observed: the response is deterministic.
    let ys = McOracle::new(GeneratorSpec::linear_switch(10, 6, 0), 100, 1)
        .unwrap()
        .sample_responses(&[1.0, 2.0, 3.0, 4.0, -1.0], &Subset::new(vec![0, 1, 2, 3, 4]))
        .unwrap();
    assert!(ys.iter().all(|&y| y == 3.0));
    assert!(McOracle::new(GeneratorSpec::moon_noise(10, 0), 10, 0).is_err());
    // Same seed, same draws.
    let a = oracle.sample_responses(&[v], &Subset::new(vec![4])).unwrap();
    let b = oracle.sample_responses(&[v], &Subset::new(vec![4])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn curve_comparison_by_hand() {
    let grid = [0.0, 1.0, 2.0, 4.0];
    let c = compare_curves(&[0.0, 0.5, 1.0, 1.0], &[0.0, 0.25, 0.5, 1.0], &grid);
    assert_eq!(c.ks, 0.5);
    // Trapezoids: 0.125 + 0.375 + 0.5.
    assert!((c.abs_integral - 1.0).abs() < 1e-15);
    assert!((c.mad - 0.25).abs() < 1e-15);
    let g = y_grid(&[0.0, 10.0], 5);
    assert_eq!(g, vec![-0.5, 2.25, 5.0, 7.75, 10.5]);
}

#[test]
fn cdf_validation_reports_per_instance() {
    let f = small_forest();
    let spec = GeneratorSpec::linear_switch(600, 6, 2);
    let oracle = McOracle::new(spec, 20_000, 3).unwrap();
    let grid = y_grid(f.data().targets(), 64);
    let inst = vec![f.data().row(0).to_vec(), f.data().row(1).to_vec()];
    let v = cdf_validation(&f, &oracle, &inst, &Subset::new(vec![0, 4]), &grid, 3).unwrap();
    assert_eq!(v.per_instance.len(), 2);
    assert!(v.mks > 0.0 && v.mks <= 1.0);
    assert!((0.0..=1.0).contains(&v.fraction_within(0.1)));
    assert!(cdf_validation(&f, &oracle, &[], &Subset::new(vec![0]), &grid, 3).is_err());
}
