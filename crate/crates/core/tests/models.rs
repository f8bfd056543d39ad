use std::collections::BTreeMap;

use rand::Rng;

use avd::forest::{train_forest, ForestParams, TrainingExample};
use avd::graph::{build_graph, sample_degree, Label};
use avd::sampling::{
    build_link_training_set, generate_ba, inject_anomalies, rng_from_seed, sample_test_vertices,
};

fn plane(n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            TrainingExample::new(vec![x, y], x + y > 1.0)
        })
        .collect()
}

#[test]
fn separable_plane_accuracy() {
    let train = plane(500, 1);
    let test = plane(500, 2);
    let forest = train_forest(&train, &ForestParams::default(), 3).unwrap();
    let correct = test
        .iter()
        .filter(|e| (forest.predict_proba(&e.features).unwrap() >= 0.5) == e.positive)
        .count();
    assert!(correct as f64 / 500.0 >= 0.95, "accuracy {}", correct as f64 / 500.0);
}

fn log_loss(forest: &avd::forest::LinkForest, data: &[TrainingExample]) -> f64 {
    let eps = 1e-6;
    data.iter()
        .map(|e| {
            let p = forest.predict_proba(&e.features).unwrap().clamp(eps, 1.0 - eps);
            -(if e.positive { p.ln() } else { (1.0 - p).ln() })
        })
        .sum::<f64>()
        / data.len() as f64
}

#[test]
fn more_trees_do_not_hurt_log_loss() {
    // plane with 10% label noise
    let noisy = |n, seed| {
        let mut rng = rng_from_seed(seed + 100);
        plane(n, seed)
            .into_iter()
            .map(|mut e| {
                if rng.gen_bool(0.1) {
                    e.positive = !e.positive;
                }
                e
            })
            .collect::<Vec<_>>()
    };
    for seed in 0..5 {
        let train = noisy(500, seed);
        let test = noisy(500, seed + 50);
        let few = train_forest(&train, &ForestParams { tree_count: 10, ..Default::default() }, seed).unwrap();
        let many = train_forest(&train, &ForestParams { tree_count: 100, ..Default::default() }, seed).unwrap();
        let (a, b) = (log_loss(&few, &test), log_loss(&many, &test));
        assert!(b <= a + 0.05, "seed {seed}: 10 trees {a}, 100 trees {b}");
    }
}

#[test]
fn degree_draws_fit_histogram() {
    // degrees 1 (x6), 2 (x3), 3 (x1), 6 (x1)
    let edges = [
        ("h", "a"), ("h", "b"), ("h", "c"), ("h", "d"), ("h", "e"), ("h", "t"),
        ("t", "p"), ("p", "q"), ("q", "r"), ("t", "s"),
    ];
    let (g, _) = build_graph(edges, false).unwrap();
    let mut expected: BTreeMap<usize, f64> = BTreeMap::new();
    for v in g.vertices() {
        *expected.entry(g.degree(v)).or_default() += 1.0 / g.vertex_count() as f64;
    }
    let n = 100_000;
    let mut rng = rng_from_seed(17);
    let mut observed: BTreeMap<usize, f64> = BTreeMap::new();
    for _ in 0..n {
        *observed.entry(sample_degree(&g, &mut rng)).or_default() += 1.0;
    }
    assert!(observed.keys().all(|k| expected.contains_key(k)));
    let chi2: f64 = expected
        .iter()
        .map(|(k, p)| {
            let e = p * n as f64;
            let o = observed.get(k).copied().unwrap_or(0.0);
            (o - e).powi(2) / e
        })
        .sum();
    // 0.99 quantile of chi-squared with 3 degrees of freedom
    assert!(chi2 < 11.345, "chi2 = {chi2}");
}

#[test]
fn sampling_is_seeded() {
    let a = generate_ba(400, 3, 5).unwrap();
    assert_eq!(a, generate_ba(400, 3, 5).unwrap());
    assert_ne!(a, generate_ba(400, 3, 6).unwrap());

    let (b, rec) = inject_anomalies(&a, 40, 1).unwrap();
    let (b2, rec2) = inject_anomalies(&a, 40, 1).unwrap();
    assert_eq!((&b, &rec), (&b2, &rec2));
    assert_eq!(b.vertices().filter(|&v| b.label(v) == Some(Label::Anomalous)).count(), 40);

    let t = sample_test_vertices(&b, 20, Some(Label::Anomalous), 3, 2).unwrap();
    assert_eq!(t, sample_test_vertices(&b, 20, Some(Label::Anomalous), 3, 2).unwrap());
    assert_eq!(t.selected.len(), 20);
    assert!(t.edges.iter().all(|&(x, y)| b.degree(x) > 3 && b.degree(y) > 3));

    let excluded = t.endpoints();
    let s = build_link_training_set(&b, &excluded, 100, 3).unwrap();
    assert_eq!(s, build_link_training_set(&b, &excluded, 100, 3).unwrap());
}
