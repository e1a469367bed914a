use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tree::{grow_from_counts, GrowConfig};
use super::*;
use crate::dataset::default_feature_names;

fn reg(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
    let p = rows[0].len();
    Dataset::regression(rows, y, default_feature_names("X", p)).unwrap()
}

fn leaf(ids: &[u32], counts: &[u32]) -> TreeNode {
    TreeNode::Leaf { sample_ids: ids.to_vec(), bootstrap_total: ids.iter().map(|&i| u64::from(counts[i as usize])).sum() }
}

/// 4 samples on one feature; tree A splits at 1.5 with counts [2,1,0,1],
/// tree B is a single leaf over everything.
pub(crate) fn toy_forest() -> Forest {
    let data = reg(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![1.0, 2.0, 3.0, 4.0]);
    let ca = vec![2, 1, 0, 1];
    let a = Tree::from_parts(
        vec![TreeNode::Internal { feature: 0, threshold: 1.5, left: 1, right: 2 }, leaf(&[0, 1], &ca), leaf(&[3], &ca)],
        0,
        ca,
        0,
    )
    .unwrap();
    let cb = vec![1, 1, 1, 1];
    let b = Tree::from_parts(vec![leaf(&[0, 1, 2, 3], &cb)], 0, cb, 1).unwrap();
    Forest::from_parts(vec![a, b], ForestParams::default(), data).unwrap()
}

#[test]
fn toy_weights_match_hand_computation() {
    let f = toy_forest();
    // Tree A leaf {0,1} with N = 3: 2/3 and 1/3, halved; tree B: 1/4 each, halved.
    let w = f.weights(&[0.5]).unwrap();
    let expected = [11.0 / 24.0, 7.0 / 24.0, 3.0 / 24.0, 3.0 / 24.0];
    for (a, b) in w.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15, "{w:?}");
    }
    assert!((f.predict_value(&[0.5]).unwrap() - 46.0 / 24.0).abs() < 1e-14);
    // Right leaf holds only sample 3 (sample 2 is out of bag).
    let w = f.weights(&[2.5]).unwrap();
    let expected = [1.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0, 5.0 / 8.0];
    for (a, b) in w.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15, "{w:?}");
    }
}

#[test]
fn single_leaf_uniform_weights() {
    let data = reg(vec![vec![0.0], vec![1.0], vec![5.0]], vec![1.0, 1.0, 1.0]);
    let c = vec![1, 1, 1];
    let t = Tree::from_parts(vec![leaf(&[0, 1, 2], &c)], 0, c, 0).unwrap();
    let f = Forest::from_parts(vec![t], ForestParams::default(), data).unwrap();
    assert_eq!(f.tree_leaf(0, &[3.0]), 0);
    for w in f.weights(&[3.0]).unwrap() {
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }
    assert_eq!(f.split_frequency(), vec![0]);
}

#[test]
fn boundary_goes_left() {
    let f = toy_forest();
    assert_eq!(f.tree_leaf(0, &[1.5]), 1);
    assert_eq!(f.tree_leaf(0, &[1.5000001]), 2);
}

/// Leaf reached by recursive replay, written independently of `Tree::leaf`.
fn replay(tree: &Tree, id: NodeId, x: &[f64]) -> NodeId {
    match tree.node(id) {
        TreeNode::Leaf { .. } => id,
        TreeNode::Internal { feature, threshold, left, right } => {
            if !(x[*feature] > *threshold) {
                replay(tree, *left, x)
            } else {
                replay(tree, *right, x)
            }
        }
    }
}

fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let y = rows.iter().map(|r| r[0] * 2.0 + (r[p - 1] > 0.0) as u8 as f64 + rng.gen::<f64>() * 0.1).collect();
    reg(rows, y)
}

#[test]
fn leaf_lookup_matches_path_replay() {
    let f = Forest::fit(random_data(300, 4, 3), &ForestParams { n_trees: 3, min_samples_leaf: 2, ..ForestParams::default() })
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.5..2.5)).collect();
        for (l, t) in f.trees().iter().enumerate() {
            assert_eq!(f.tree_leaf(l, &x), replay(t, t.root(), &x));
        }
    }
}

#[test]
fn eight_point_step_splits_between_signs() {
    let xs = [-3.0, -2.0, -1.5, -0.25, 0.5, 1.0, 2.0, 4.0];
    let data = reg(xs.iter().map(|&v| vec![v]).collect(), xs.iter().map(|&v| f64::from(v > 0.0)).collect());
    let cfg = GrowConfig { min_samples_leaf: 1, mtry: 1, bootstrap_size: 8 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let nodes = grow_from_counts(&data, &data.columns(), &cfg, &[1; 8], &mut rng);
    let TreeNode::Internal { threshold, .. } = nodes[0] else { panic!("root should split") };
    // Exhaustive oracle: SSE after splitting at each midpoint.
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|y| (y - m).powi(2)).sum::<f64>()
    };
    let ys: Vec<f64> = xs.iter().map(|&v| f64::from(v > 0.0)).collect();
    let (mut best, mut best_t) = (f64::INFINITY, 0.0);
    for k in 1..8 {
        let cost = sse(&ys[..k]) + sse(&ys[k..]);
        if cost < best {
            best = cost;
            best_t = (xs[k - 1] + xs[k]) / 2.0;
        }
    }
    assert_eq!(threshold, best_t);
    assert!(threshold > -0.25 && threshold < 0.5);
}

/// Brute-force best root split: maximal SSE reduction over every feature
/// and every midpoint between consecutive distinct values.
fn oracle_best_reduction(data: &Dataset, min_leaf: usize) -> Option<f64> {
    let y = data.targets();
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let all: Vec<usize> = (0..data.n_samples()).collect();
    let parent = sse(&all);
    let mut best: Option<f64> = None;
    for f in 0..data.n_features() {
        let mut vals: Vec<f64> = all.iter().map(|&i| data.value(i, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| data.value(i, f) <= t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let red = parent - sse(&l) - sse(&r);
            if best.is_none_or(|b| red > b) {
                best = Some(red);
            }
        }
    }
    best.filter(|&b| b > 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn root_split_matches_exhaustive_oracle(seed in 0u64..1000, n in 4usize..24, p in 1usize..4) {
        let data = random_data(n, p, seed);
        let cfg = GrowConfig { min_samples_leaf: 1, mtry: p, bootstrap_size: n };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = grow_from_counts(&data, &data.columns(), &cfg, &vec![1; n], &mut rng);
        let oracle = oracle_best_reduction(&data, 1);
        match nodes[0] {
            TreeNode::Internal { feature, threshold, .. } => {
                let y = data.targets();
                let idx: Vec<usize> = (0..n).collect();
                let sse = |v: &[usize]| {
                    let m = v.iter().map(|&i| y[i]).sum::<f64>() / v.len() as f64;
                    v.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
                };
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| data.value(i, feature) <= threshold);
                let red = sse(&idx) - sse(&l) - sse(&r);
                let best = oracle.expect("oracle finds a split too");
                prop_assert!((red - best).abs() <= 1e-9 * best.max(1.0), "{red} vs {best}");
            }
            TreeNode::Leaf { .. } => prop_assert!(oracle.is_none()),
        }
    }

    #[test]
    fn weights_are_a_distribution(seed in 0u64..500, qx in -3.0f64..3.0, qy in -3.0f64..3.0) {
        let f = Forest::fit(random_data(60, 2, seed), &ForestParams { n_trees: 4, min_samples_leaf: 3, seed, ..ForestParams::default() }).unwrap();
        let w = f.weights(&[qx, qy]).unwrap();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let dot: f64 = w.iter().zip(f.data().targets()).map(|(a, b)| a * b).sum();
        prop_assert!((f.predict_value(&[qx, qy]).unwrap() - dot).abs() <= 1e-10);
    }

    #[test]
    fn leaves_respect_min_samples(seed in 0u64..500, msl in 1usize..8) {
        let f = Forest::fit(random_data(80, 3, seed), &ForestParams { n_trees: 3, min_samples_leaf: msl, seed, ..ForestParams::default() }).unwrap();
        for t in f.trees() {
            prop_assert_eq!(t.bootstrap_size(), 80);
            for node in t.nodes() {
                if let TreeNode::Leaf { bootstrap_total, .. } = node {
                    // A root that cannot split may hold fewer.
                    prop_assert!(*bootstrap_total >= msl as u64 || t.nodes().len() == 1);
                }
            }
        }
    }
}

#[test]
fn single_sample_gives_single_leaves() {
    let data = reg(vec![vec![1.0, 2.0]], vec![3.0]);
    let f = Forest::fit(data, &ForestParams::default()).unwrap();
    for t in f.trees() {
        assert_eq!(t.nodes().len(), 1);
        assert!(matches!(&t.nodes()[0], TreeNode::Leaf { sample_ids, .. } if sample_ids == &vec![0]));
    }
    assert!((f.predict_value(&[0.0, 0.0]).unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn constant_target_predicts_constant() {
    let mut data = random_data(50, 3, 1);
    data = data.with_targets(vec![2.5; 50]).unwrap();
    let f = Forest::fit(data, &ForestParams::default()).unwrap();
    assert!((f.predict_value(&[0.3, -1.0, 1.0]).unwrap() - 2.5).abs() < 1e-12);
    assert_eq!(f.split_frequency(), vec![0, 0, 0]);
}

#[test]
fn split_frequency_counts_internal_nodes() {
    let f = Forest::fit(random_data(200, 3, 5), &ForestParams::default()).unwrap();
    let total: usize = f.trees().iter().map(Tree::n_internal).sum();
    assert_eq!(f.split_frequency().iter().sum::<usize>(), total);
}

#[test]
fn fit_is_reproducible_and_thread_independent() {
    let data = random_data(300, 5, 2);
    let params = ForestParams { n_trees: 6, min_samples_leaf: 2, seed: 42, ..ForestParams::default() };
    let fit_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| Forest::fit(data.clone(), &params).unwrap())
    };
    let a = fit_with(1);
    let b = fit_with(4);
    assert_eq!(a.trees(), b.trees());
    let c = Forest::fit(data.clone(), &ForestParams { seed: 43, ..params.clone() }).unwrap();
    assert_ne!(a.trees(), c.trees());
}

#[test]
fn classification_probabilities_and_ties() {
    let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
    let data = Dataset::classification(rows, vec![1, 0, 1, 0], vec!["a".into()], None).unwrap();
    let c = vec![1, 1, 1, 1];
    let t = Tree::from_parts(vec![leaf(&[0, 1, 2, 3], &c)], 0, c, 0).unwrap();
    let f = Forest::from_parts(vec![t], ForestParams::default(), data).unwrap();
    match f.predict(&[0.0]).unwrap() {
        Prediction::Class { label, probabilities } => {
            assert_eq!(label, 0, "ties go to the smallest label");
            assert_eq!(probabilities, vec![0.5, 0.5]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn rejects_bad_params_and_queries() {
    let data = random_data(20, 2, 0);
    let bad = |p: ForestParams| Forest::fit(data.clone(), &p).unwrap_err();
    assert!(matches!(bad(ForestParams { n_trees: 0, ..Default::default() }), Error::InvalidParam { .. }));
    assert!(matches!(bad(ForestParams { min_samples_leaf: 0, ..Default::default() }), Error::InvalidParam { .. }));
    assert!(matches!(bad(ForestParams { mtry: Some(3), ..Default::default() }), Error::InvalidParam { .. }));
    assert!(matches!(bad(ForestParams { bootstrap_size: Some(21), ..Default::default() }), Error::InvalidParam { .. }));
    let f = Forest::fit(data, &ForestParams::default()).unwrap();
    assert!(matches!(f.weights(&[1.0]), Err(Error::DimensionMismatch { .. })));
    assert!(f.weights(&[f64::NAN, 0.0]).is_err());
    let empty = Dataset::from_flat(vec![], vec![], vec!["a".into()], Task::Regression, 0).unwrap();
    assert!(matches!(Forest::fit(empty, &ForestParams::default()), Err(Error::EmptyDataset)));
}

#[test]
fn recommended_leaf_size() {
    assert_eq!(ForestParams::recommended_min_samples_leaf(10_000), 11);
    assert_eq!(ForestParams::recommended_min_samples_leaf(1), 1);
    assert_eq!(ForestParams::recommended_min_samples_leaf(100), 1);
}

#[test]
fn model_round_trip_and_hash_check() {
    let data = random_data(120, 3, 8);
    let f = Forest::fit(data.clone(), &ForestParams { n_trees: 4, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    f.save(&path).unwrap();
    let g = Forest::load(&path, data.clone(), HashPolicy::Reject).unwrap();
    assert_eq!(f.trees(), g.trees());
    for x in data.rows().take(20) {
        assert_eq!(f.predict_value(x).unwrap(), g.predict_value(x).unwrap());
    }
    let mut y = data.targets().to_vec();
    y[0] += 1.0;
    let other = data.with_targets(y).unwrap();
    assert!(matches!(Forest::load(&path, other.clone(), HashPolicy::Reject), Err(Error::HashMismatch { .. })));
    assert!(Forest::load(&path, other, HashPolicy::Warn).is_ok());
}

#[test]
fn rejects_inconsistent_trees() {
    let data = reg(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]);
    let c = vec![1, 1];
    // Leaf total disagrees with the member counts.
    let bad = Tree::from_parts(vec![TreeNode::Leaf { sample_ids: vec![0, 1], bootstrap_total: 3 }], 0, c.clone(), 0);
    assert!(matches!(bad, Err(Error::ModelFormat(_))));
    // Split on a feature the data does not have.
    let t = Tree::from_parts(
        vec![TreeNode::Internal { feature: 1, threshold: 0.5, left: 1, right: 2 }, leaf(&[0], &c), leaf(&[1], &c)],
        0,
        c,
        0,
    )
    .unwrap();
    assert!(matches!(Forest::from_parts(vec![t], ForestParams::default(), data), Err(Error::FeatureOutOfRange { .. })));
}
