use proptest::prelude::*;

use super::*;

fn sample_moments(data: &Dataset, dims: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = data.n_samples() as f64;
    let mean: Vec<f64> = (0..dims).map(|j| data.rows().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = (0..dims)
        .map(|a| (0..dims).map(|b| data.rows().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0)).collect())
        .collect();
    (mean, cov)
}

#[test]
fn linear_switch_moments_and_response() {
    let s = GeneratorSpec::linear_switch(20_000, 8, 1).generate().unwrap();
    let (mean, cov) = sample_moments(&s.data, 8);
    // Standard errors at n = 20000: mean ~0.017, variance ~0.058.
    for j in 0..8 {
        assert!(mean[j].abs() < 0.08, "mean {j} = {}", mean[j]);
        assert!((cov[j][j] - 5.8).abs() < 0.25, "var {j} = {}", cov[j][j]);
        for k in 0..j {
            assert!((cov[j][k] - 0.8).abs() < 0.15, "cov {j},{k} = {}", cov[j][k]);
        }
    }
    for (i, row) in s.data.rows().enumerate() {
        let expected = if row[4] <= 0.0 { row[0] + row[1] } else { row[2] + row[3] };
        assert_eq!(s.data.targets()[i], expected);
        assert_eq!(s.truth[i], if row[4] <= 0.0 { vec![0, 1, 4] } else { vec![2, 3, 4] });
    }
}

#[test]
fn generators_are_deterministic() {
    for spec in [
        GeneratorSpec::linear_switch(50, 6, 3),
        GeneratorSpec::moon_noise(50, 3),
        GeneratorSpec::step_demand(50, 3),
        GeneratorSpec::tabular_clf(50, 3),
    ] {
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a.data, b.data, "{}", spec.name());
        let json = serde_json::to_string(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
    let a = GeneratorSpec::linear_switch(50, 6, 3).generate().unwrap();
    let c = GeneratorSpec::linear_switch(50, 6, 4).generate().unwrap();
    assert_ne!(a.data, c.data);
}

#[test]
fn moon_noise_flips_on_first_noise_column() {
    let s = gen_moon_noise(10_000, 2, 0.0, 3, true).unwrap();
    assert_eq!(s.data.n_features(), 5);
    assert_eq!(s.data.feature_names()[..3], ["X1", "X2", "Z1"]);
    let mut flipped = 0;
    for (i, row) in s.data.rows().enumerate() {
        let moon = i % 2;
        // Without jitter every point lies on its moon.
        let (cx, cy) = if moon == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
        assert!((((row[0] - cx).powi(2) + (row[1] - cy).powi(2)).sqrt() - 1.0).abs() < 1e-12);
        let label = s.data.label(i);
        assert_eq!(label != moon, row[2] > 0.0);
        flipped += usize::from(label != moon);
    }
    let rate = flipped as f64 / 10_000.0;
    assert!((rate - 0.5).abs() < 0.03, "flip rate {rate}");
    assert!(s.truth.iter().all(|t| t == &vec![0, 1, 2]));
    let plain = gen_moon_noise(100, 2, 0.1, 0, false).unwrap();
    assert!((0..100).all(|i| plain.data.label(i) == i % 2));
    assert!(gen_moon_noise(100, 2, 0.1, 0, true).is_err());
}

#[test]
fn tabular_labels_follow_rule_up_to_noise() {
    let s = gen_tabular_clf(20_000, 5, 0.03).unwrap();
    let agree = s.data.rows().enumerate().filter(|(i, r)| s.data.label(*i) == tabular_clf_label(r)).count() as f64 / 20_000.0;
    assert!((agree - 0.97).abs() < 0.01, "agreement {agree}");
    assert!(gen_tabular_clf(10, 5, 0.5).is_err());
}

#[test]
fn step_demand_is_noise_free_at_zero_noise() {
    let s = gen_step_demand(500, 1, 0.0).unwrap();
    for (row, y) in s.data.rows().zip(s.data.targets()) {
        assert_eq!(*y, step_demand_response(row));
        assert!(row[0] >= 0.0 && row[0] < 24.0 && row[0].fract() == 0.0);
        assert!((1.0..=12.0).contains(&row[3]));
    }
    // Distractors do not move the response.
    let mut a = s.data.row(0).to_vec();
    let base = step_demand_response(&a);
    a[3] = 7.0;
    a[5] = 0.99;
    a[6] = 0.01;
    assert_eq!(step_demand_response(&a), base);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_rows(n in 1usize..200, frac in 0.0f64..0.99, seed in 0u64..100, clf in proptest::bool::ANY) {
        let data = if clf {
            gen_tabular_clf(n, seed, 0.0).unwrap().data
        } else {
            gen_step_demand(n, seed, 1.0).unwrap().data
        };
        let (train, test) = split_indices(&data, frac, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(train.windows(2).all(|w| w[0] < w[1]));
        if clf {
            // Each class contributes round(n_c * frac) test rows.
            for c in 0..2 {
                let n_c = (0..n).filter(|&i| data.label(i) == c).count();
                let t_c = test.iter().filter(|&&i| data.label(i) == c).count();
                prop_assert_eq!(t_c, (n_c as f64 * frac).round() as usize);
            }
        } else {
            prop_assert_eq!(test.len(), (n as f64 * frac).round() as usize);
        }
        prop_assert_eq!(split_indices(&data, frac, seed).unwrap(), (train, test));
    }
}

#[test]
fn split_rejects_bad_fraction() {
    let data = gen_step_demand(10, 0, 1.0).unwrap().data;
    assert!(split(&data, 1.0, 0).is_err());
    assert!(split(&data, -0.1, 0).is_err());
    let (train, test) = split(&data, 0.0, 0).unwrap();
    assert_eq!((train.n_samples(), test.n_samples()), (10, 0));
}

#[test]
fn csv_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_linear_switch(30, 6, 2).unwrap().data;
    let path = dir.path().join("d.csv");
    write_csv(&data, &path, "y").unwrap();
    let back = load_csv(&path, "y", Task::Regression).unwrap();
    assert_eq!(back, data);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b,y\n1,2,3\n1,x,3\n").unwrap();
    match load_csv(&bad, "y", Task::Regression) {
        Err(Error::Csv { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "b")),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(load_csv(&bad, "target", Task::Regression), Err(Error::MissingColumn { .. })));
    std::fs::write(&bad, "a,y\n1,0.5\n").unwrap();
    assert!(load_csv(&bad, "y", Task::Classification).is_err());
    std::fs::write(&bad, "a,y\n1,2\n3\n").unwrap();
    assert!(load_csv(&bad, "y", Task::Regression).is_err());
    assert!(matches!(load_csv(&dir.path().join("missing.csv"), "y", Task::Regression), Err(Error::Io { .. })));
    std::fs::write(&bad, "a,y\n1,1\n2,0\n").unwrap();
    let clf = load_csv(&bad, "y", Task::Classification).unwrap();
    assert_eq!(clf.n_classes(), 2);
}

#[test]
fn feature_sets_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let path = dir.path().join("sets.csv");
    let sets = vec![vec![0, 2], vec![], vec![1]];
    write_feature_sets(&path, &sets, &names).unwrap();
    let back = read_feature_sets(&path, &names).unwrap();
    assert_eq!(back, vec![(0, vec![0, 2]), (1, vec![]), (2, vec![1])]);
    std::fs::write(&path, "instance_id,features\n4,2;a;2\n5,zz\n").unwrap();
    match read_feature_sets(&path, &names) {
        Err(Error::Csv { row, .. }) => assert_eq!(row, 2),
        other => panic!("unexpected {other:?}"),
    }
    std::fs::write(&path, "instance_id,features\n4,2;a;2\n").unwrap();
    assert_eq!(read_feature_sets(&path, &names).unwrap(), vec![(4, vec![0, 2])]);
}

#[test]
fn instances_are_matched_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
    let path = dir.path().join("q.csv");
    std::fs::write(&path, "y,b,a\n9,2,1\n8,4,3\n").unwrap();
    assert_eq!(load_instances(&path, &names).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    std::fs::write(&path, "a\n1\n").unwrap();
    assert!(matches!(load_instances(&path, &names), Err(Error::MissingColumn { .. })));
    std::fs::write(&path, "a,b\n1,nan\n").unwrap();
    match load_instances(&path, &names) {
        Err(Error::Csv { row, column, .. }) => assert_eq!((row, column.as_str()), (1, "b")),
        other => panic!("unexpected {other:?}"),
    }
}
