use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use qstar::workload::{
    dataset_from_features, generate_dataset, ArrivalModel, CircuitFeatures, Dataset,
    GenerationParams, TaggedCircuit, DEFAULT_APP_TAGS,
};

/// Two-sided one-sample KS statistic against U[0, 1).
fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value at alpha = 0.01.
fn ks_critical_001(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

#[test]
fn arrivals_pass_ks_at_one_percent() {
    for seed in [1u64, 2, 3] {
        let params = GenerationParams {
            n_subsets: 800,
            ..Default::default()
        };
        let ds = generate_dataset(&params, seed).unwrap();
        let xs: Vec<f64> = ds
            .tasks()
            .map(|t| t.arrival_at.seconds() / params.window_s)
            .collect();
        assert_eq!(xs.len(), 20_000);
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        let d = ks_uniform(xs);
        assert!(d < ks_critical_001(20_000), "seed {seed}: D = {d}");
    }
}

#[test]
fn ks_rejects_a_skewed_sample() {
    let xs: Vec<f64> = (0..10_000)
        .map(|i| ((i as f64 + 0.5) / 10_000.0).powi(2))
        .collect();
    assert!(ks_uniform(xs) > ks_critical_001(10_000));
}

#[test]
fn attribute_ranges_are_covered_evenly() {
    let ds = generate_dataset(&GenerationParams::default(), 5).unwrap();
    assert_eq!(ds.n_tasks(), 47_500);
    let mut qubits = BTreeMap::new();
    let mut tags = BTreeMap::new();
    for t in ds.tasks() {
        *qubits.entry(t.qubit_count).or_insert(0usize) += 1;
        *tags.entry(t.app_tag.clone()).or_insert(0usize) += 1;
        assert!((1..=500).contains(&t.depth1_layers));
        assert!((100..=2000).contains(&t.shots));
    }
    assert_eq!(
        qubits.keys().copied().collect::<Vec<_>>(),
        (2..=27).collect::<Vec<_>>()
    );
    assert_eq!(tags.len(), 12);
    // Chi-square on the 26 qubit values, 25 dof: 0.1% critical value is 52.6.
    let expected = 47_500.0 / 26.0;
    let chi2: f64 = qubits
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < 52.6, "{chi2}");
}

#[test]
fn poisson_counts_average_to_rate() {
    let params = GenerationParams {
        n_subsets: 2000,
        arrival: ArrivalModel::Poisson,
        ..Default::default()
    };
    let ds = generate_dataset(&params, 9).unwrap();
    let mean = ds.n_tasks() as f64 / 2000.0;
    assert!((mean - 25.0).abs() < 0.5, "{mean}");
    assert!(ds.subsets().iter().any(|s| s.len() != 25));
}

#[test]
fn feature_pool_tags_all_appear() {
    let pool: Vec<TaggedCircuit> = DEFAULT_APP_TAGS
        .iter()
        .enumerate()
        .map(|(i, tag)| TaggedCircuit {
            app_tag: tag.to_string(),
            features: CircuitFeatures {
                qubit_count: 2 + i as u32,
                depth1_layers: 10 + i as u64,
                gate_count: 20 + i as u64,
                gate_histogram: BTreeMap::new(),
            },
        })
        .collect();
    let params = GenerationParams {
        n_subsets: 400,
        ..Default::default()
    };
    let ds = dataset_from_features(&pool, &params, 4).unwrap();
    assert_eq!(ds.n_tasks(), 10_000);
    let mut counts = BTreeMap::new();
    for t in ds.tasks() {
        let c = &pool
            .iter()
            .find(|c| c.app_tag == t.app_tag)
            .unwrap()
            .features;
        assert_eq!(
            (t.qubit_count, t.depth1_layers),
            (c.qubit_count, c.depth1_layers)
        );
        *counts.entry(t.app_tag.as_str()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 12);
    assert!(counts.values().all(|&c| c > 700), "{counts:?}");
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

#[test]
fn full_size_dataset_roundtrips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tasks.csv");
    let ds = generate_dataset(&GenerationParams::default(), 2024).unwrap();
    assert_eq!(ds.n_subsets(), 1900);
    ds.save_csv(&path).unwrap();
    let first = std::fs::read(&path).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 47_501);

    let loaded = Dataset::load_csv(&path).unwrap();
    assert_eq!(loaded, ds);
    let again = dir.path().join("again.csv");
    loaded.save_csv(&again).unwrap();
    assert_eq!(digest(&std::fs::read(&again).unwrap()), digest(&first));

    // Without the sidecar the rows still round-trip.
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    let bare = Dataset::read_csv(buf.as_slice()).unwrap();
    assert_eq!(bare.subsets(), ds.subsets());
}

#[test]
fn generation_is_deterministic() {
    let p = GenerationParams {
        n_subsets: 50,
        ..Default::default()
    };
    let a = generate_dataset(&p, 77).unwrap();
    let b = generate_dataset(&p, 77).unwrap();
    let c = generate_dataset(&p, 78).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.subsets(), c.subsets());
}
