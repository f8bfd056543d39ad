//! Metrics, cross-validation of the meta-classifier, information gain, and
//! the end-to-end experiment runner.

use std::collections::{BTreeMap, HashSet};

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anomaly::{profile_vertices, rank_vertices, MetaFeature, SortOrder, VertexAnomalyProfile};
use crate::config::{Exclusion, ExperimentConfig, GraphSource};
use crate::error::{Error, Result, StageExt};
use crate::forest::{train_forest, ForestParams, TrainingExample};
use crate::graph::{Graph, Label, VertexId};
use crate::io::{load_edge_list, load_labels};
use crate::sampling::{
    build_link_training_set, generate_ba, inject_anomalies, injection_count, rng_from_seed, sample_test_vertices,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Mixes a stage tag into a base seed (splitmix64 finaliser).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape { expected: a, got: b });
    }
    Ok(())
}

/// Rank-based ROC AUC: the Mann–Whitney statistic with tied scores sharing
/// their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Parameter("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum keeps the average of a tie group an integer.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j) as u128; // 2 * mean of ranks i+1..=j
        let in_group = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum2 += avg2 * in_group;
        i = j;
    }
    let (p, n) = (pos as u128, neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
}

fn counts(predicted: &[bool], labels: &[bool]) -> Counts {
    let mut c = Counts::default();
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// TPR, FPR and precision; precision is 0 when nothing is predicted positive.
pub fn confusion_metrics(predicted: &[bool], labels: &[bool]) -> Result<ConfusionMetrics> {
    check_lengths(labels.len(), predicted.len())?;
    let c = counts(predicted, labels);
    if c.tp + c.fn_ == 0 || c.fp + c.tn == 0 {
        return Err(Error::UndefinedMetric("confusion rates need both classes".into()));
    }
    Ok(ConfusionMetrics {
        tpr: ratio(c.tp, c.tp + c.fn_),
        fpr: ratio(c.fp, c.fp + c.tn),
        precision: ratio(c.tp, c.tp + c.fp),
    })
}

/// Fraction of anomalous vertices among the first `k` of `ranked`.
pub fn precision_at_k<F: Fn(VertexId) -> bool>(ranked: &[VertexId], is_anomalous: F, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if k > ranked.len() {
        return Err(Error::Parameter(format!("k={k} exceeds the {} ranked vertices", ranked.len())));
    }
    Ok(ranked[..k].iter().filter(|&&v| is_anomalous(v)).count() as f64 / k as f64)
}

/// Assigns each example a fold in `0..folds`, stratified by label.
///
/// Each class is shuffled and dealt round-robin; the second class continues
/// where the first stopped so fold sizes differ by at most one. Every class
/// needs at least `folds` members, except for leave-one-out (`folds == n`).
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if folds < 2 {
        return Err(Error::Parameter(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::Stratification(format!("{folds} folds for {n} examples")));
    }
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    if folds < n {
        for (name, class) in [("anomalous", &pos), ("normal", &neg)] {
            if class.len() < folds {
                return Err(Error::Stratification(format!(
                    "{} {name} examples for {folds} folds",
                    class.len()
                )));
            }
        }
    }
    let mut rng = rng_from_seed(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    for (slot, &i) in pos.iter().chain(&neg).enumerate() {
        assignment[i] = slot % folds;
    }
    Ok(assignment)
}

/// Metrics of one held-out fold. A rate is `None` when the fold lacks the
/// class it is conditioned on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub size: usize,
    pub auc: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
}

/// Averages over the folds (or runs) where each metric is defined.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub auc: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
}

fn mean_defined<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let (sum, n) = values.into_iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MeanMetrics {
    fn of_folds(folds: &[FoldMetrics]) -> Self {
        MeanMetrics {
            auc: mean_defined(folds.iter().map(|f| f.auc)),
            tpr: mean_defined(folds.iter().map(|f| f.tpr)),
            fpr: mean_defined(folds.iter().map(|f| f.fpr)),
            precision: mean_defined(folds.iter().map(|f| f.precision)),
        }
    }

    fn of_many<'a, I: IntoIterator<Item = &'a MeanMetrics> + Clone>(items: I) -> Self {
        MeanMetrics {
            auc: mean_defined(items.clone().into_iter().map(|m| m.auc)),
            tpr: mean_defined(items.clone().into_iter().map(|m| m.tpr)),
            fpr: mean_defined(items.clone().into_iter().map(|m| m.fpr)),
            precision: mean_defined(items.into_iter().map(|m| m.precision)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldMetrics>,
    pub mean: MeanMetrics,
}

/// Stratified k-fold evaluation of a forest trained on the seven
/// meta-features. A held-out vertex is predicted anomalous when at least
/// half the vote goes that way.
pub fn k_fold_cv(
    profiles: &[VertexAnomalyProfile],
    labels: &[bool],
    folds: usize,
    seed: u64,
    params: &ForestParams,
) -> Result<CrossValidation> {
    check_lengths(profiles.len(), labels.len())?;
    let assignment = stratified_folds(labels, folds, seed)?;
    let rows: Vec<Vec<f64>> = profiles.iter().map(|p| p.to_vec()).collect();
    let mut out = Vec::with_capacity(folds);
    for fold in 0..folds {
        let train: Vec<TrainingExample> = (0..rows.len())
            .filter(|&i| assignment[i] != fold)
            .map(|i| TrainingExample::new(rows[i].clone(), labels[i]))
            .collect();
        let held: Vec<usize> = (0..rows.len()).filter(|&i| assignment[i] == fold).collect();
        let forest = train_forest(&train, params, derive_seed(seed, fold as u64 + 1))?;
        let scores: Vec<f64> = held.iter().map(|&i| forest.predict_proba(&rows[i])).collect::<Result<_>>()?;
        let truth: Vec<bool> = held.iter().map(|&i| labels[i]).collect();
        let predicted: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
        let c = counts(&predicted, &truth);
        let has_pos = c.tp + c.fn_ > 0;
        let has_neg = c.fp + c.tn > 0;
        out.push(FoldMetrics {
            fold,
            size: held.len(),
            auc: if has_pos && has_neg { Some(auc(&scores, &truth)?) } else { None },
            tpr: has_pos.then(|| ratio(c.tp, c.tp + c.fn_)),
            fpr: has_neg.then(|| ratio(c.fp, c.fp + c.tn)),
            precision: has_pos.then(|| ratio(c.tp, c.tp + c.fp)),
        });
    }
    let mean = MeanMetrics::of_folds(&out);
    Ok(CrossValidation { folds: out, mean })
}

fn entropy(pos: usize, total: usize) -> f64 {
    if pos == 0 || pos == total {
        return 0.0;
    }
    let p = pos.min(total - pos) as f64 / total as f64;
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Cut points for equal-frequency binning. Each ideal boundary at position
/// `b * n / bins` is moved to the nearest change between distinct values
/// (lower one on a tie) and becomes the midpoint of that change.
fn equal_frequency_cuts(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let changes: Vec<usize> = (1..n).filter(|&i| sorted[i - 1] < sorted[i]).collect();
    if changes.is_empty() {
        return Vec::new();
    }
    let mut picked: Vec<usize> = (1..bins)
        .map(|b| {
            let target = b * n / bins;
            let at = changes.partition_point(|&c| c < target);
            match (at.checked_sub(1).map(|i| changes[i]), changes.get(at).copied()) {
                (Some(lo), Some(hi)) => {
                    if target - lo <= hi - target {
                        lo
                    } else {
                        hi
                    }
                }
                (Some(lo), None) => lo,
                (None, Some(hi)) => hi,
                (None, None) => unreachable!("changes is non-empty"),
            }
        })
        .collect();
    picked.dedup();
    picked.into_iter().map(|i| sorted[i - 1] + (sorted[i] - sorted[i - 1]) / 2.0).collect()
}

/// Entropy reduction of the labels, in bits, from equal-frequency binning of
/// `values` into at most `bins` bins.
pub fn info_gain(values: &[f64], labels: &[bool], bins: usize) -> Result<f64> {
    check_lengths(values.len(), labels.len())?;
    if bins == 0 {
        return Err(Error::Parameter("bins must be at least 1".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parameter("NaN feature value".into()));
    }
    let n = labels.len();
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == n {
        return Err(Error::UndefinedMetric("information gain needs both classes".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let cuts = equal_frequency_cuts(&sorted, bins);
    let mut tally = vec![(0usize, 0usize); cuts.len() + 1];
    for (&x, &l) in values.iter().zip(labels) {
        let bin = cuts.partition_point(|&c| c < x);
        tally[bin].1 += 1;
        if l {
            tally[bin].0 += 1;
        }
    }
    let conditional: f64 =
        tally.iter().filter(|t| t.1 > 0).map(|&(p, t)| t as f64 / n as f64 * entropy(p, t)).sum();
    Ok((entropy(pos, n) - conditional).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub vertices: usize,
    pub edges: usize,
    pub injected: usize,
    pub test_anomalous: usize,
    pub test_normal: usize,
    /// Test vertices left out of scoring because they have no edges in the
    /// scoring direction.
    pub unscored: usize,
    pub link_training_examples: usize,
    pub link_holdout_auc: Option<f64>,
    pub cross_validation: CrossValidation,
    pub precision_at_k: BTreeMap<usize, f64>,
    pub info_gain: BTreeMap<String, f64>,
    /// Meta-feature names by decreasing information gain.
    pub info_gain_ranking: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub config: BTreeMap<String, String>,
    pub run_count: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunReport>,
    /// Mean over runs of each run's fold-averaged metrics.
    pub mean: MeanMetrics,
    pub link_holdout_auc: Option<f64>,
    pub precision_at_k: BTreeMap<usize, f64>,
    pub info_gain: BTreeMap<String, f64>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// `k,precision` rows with a header.
    pub fn precision_csv(&self) -> String {
        let mut s = String::from("k,precision\n");
        for (k, p) in &self.precision_at_k {
            s.push_str(&format!("{k},{p}\n"));
        }
        s
    }
}

// Stage tags for derive_seed.
const SEED_GENERATE: u64 = 1;
const SEED_INJECT: u64 = 2;
const SEED_RANDOM_LABELS: u64 = 3;
const SEED_TEST_POSITIVE: u64 = 4;
const SEED_TEST_NEGATIVE: u64 = 5;
const SEED_LINK_SAMPLE: u64 = 6;
const SEED_LINK_SPLIT: u64 = 7;
const SEED_LINK_FOREST: u64 = 8;
const SEED_CV: u64 = 9;

fn base_graph(config: &ExperimentConfig) -> Result<Graph> {
    match &config.source {
        GraphSource::Generate { n, m } => {
            generate_ba(*n, *m, derive_seed(config.master_seed, SEED_GENERATE)).stage("generate")
        }
        GraphSource::File { path, labels } => {
            let (g, report) = load_edge_list(path, config.directed).stage("load graph")?;
            if report.self_loops + report.duplicates > 0 {
                info!("dropped {} self-loops and {} duplicate edges", report.self_loops, report.duplicates);
            }
            match labels {
                Some(p) => Ok(g.with_named_labels(&load_labels(p).stage("load labels")?)),
                None => Ok(g),
            }
        }
    }
}

fn relabel_randomly(g: Graph, fraction: f64, seed: u64) -> Result<Graph> {
    let mut rng = rng_from_seed(seed);
    let labels: Vec<Label> = g
        .vertices()
        .map(|_| if rng.gen_bool(fraction) { Label::Anomalous } else { Label::Normal })
        .collect();
    let directed = g.is_directed();
    let (names, edges, _) = g.into_parts();
    Graph::from_parts(names, edges, directed, Some(labels)).map(|(g, _)| g)
}

/// Runs the whole pipeline `run_count` times. The host graph is built once
/// from the master seed; run `r` uses seed `master_seed + r` for everything
/// after that.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvaluationReport> {
    config.validate().stage("config")?;
    let host = base_graph(config)?;
    info!("host graph: {} vertices, {} edges", host.vertex_count(), host.edge_count());
    let seeds: Vec<u64> = (0..config.run_count as u64).map(|r| config.master_seed.wrapping_add(r)).collect();
    let runs = seeds
        .iter()
        .enumerate()
        .map(|(r, &seed)| run_once(config, &host, r, seed))
        .collect::<Result<Vec<_>>>()?;

    let mean = MeanMetrics::of_many(runs.iter().map(|r| &r.cross_validation.mean));
    let link_holdout_auc = mean_defined(runs.iter().map(|r| r.link_holdout_auc));
    let mut precision_at_k = BTreeMap::new();
    for &k in &config.precision_k {
        if let Some(p) = mean_defined(runs.iter().map(|r| r.precision_at_k.get(&k).copied())) {
            precision_at_k.insert(k, p);
        }
    }
    let mut info_gain = BTreeMap::new();
    for f in MetaFeature::ALL {
        let name = f.name().to_string();
        if let Some(g) = mean_defined(runs.iter().map(|r| r.info_gain.get(&name).copied())) {
            info_gain.insert(name, g);
        }
    }
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.to_pairs(),
        run_count: config.run_count,
        seeds,
        runs,
        mean,
        link_holdout_auc,
        precision_at_k,
        info_gain,
    })
}

fn run_once(config: &ExperimentConfig, host: &Graph, run: usize, seed: u64) -> Result<RunReport> {
    let (mut g, injected) = if config.inject {
        let n = injection_count(host.vertex_count(), config.anomaly_fraction).stage("inject")?;
        let (g, rec) = inject_anomalies(host, n, derive_seed(seed, SEED_INJECT)).stage("inject")?;
        (g, rec.injected.len())
    } else {
        (host.clone(), 0)
    };
    if config.random_labels {
        g = relabel_randomly(g, config.anomaly_fraction, derive_seed(seed, SEED_RANDOM_LABELS)).stage("random labels")?;
    }
    if g.labels().is_none() {
        return Err(Error::Parameter(
            "the graph has no labels: enable injection, random labels, or give a labels file".into(),
        ))
        .stage("test set");
    }

    let mut test = sample_test_vertices(
        &g,
        config.test_positive_count,
        Some(Label::Anomalous),
        config.min_friends,
        derive_seed(seed, SEED_TEST_POSITIVE),
    )
    .stage("test set")?;
    let negatives = sample_test_vertices(
        &g,
        config.test_negative_count,
        Some(Label::Normal),
        config.min_friends,
        derive_seed(seed, SEED_TEST_NEGATIVE),
    )
    .stage("test set")?;
    test.extend(negatives);

    let excluded: HashSet<VertexId> = match config.link_exclusion {
        Exclusion::Endpoints => test.endpoints(),
        Exclusion::Selected => test.selected.iter().copied().collect(),
    };
    let train_n = config.link_train_size_per_class;
    let hold_n = config.link_holdout_per_class;
    let mut sample = build_link_training_set(&g, &excluded, train_n + hold_n, derive_seed(seed, SEED_LINK_SAMPLE))
        .stage("link training set")?;
    let per_class = train_n + hold_n;
    let mut split_rng = rng_from_seed(derive_seed(seed, SEED_LINK_SPLIT));
    sample.examples[..per_class].shuffle(&mut split_rng);
    sample.examples[per_class..].shuffle(&mut split_rng);
    let mut train = Vec::with_capacity(2 * train_n);
    let mut holdout = Vec::with_capacity(2 * hold_n);
    for class in sample.examples.chunks(per_class) {
        train.extend_from_slice(&class[..train_n]);
        holdout.extend_from_slice(&class[train_n..]);
    }
    let forest = train_forest(&train, &config.link_forest, derive_seed(seed, SEED_LINK_FOREST)).stage("link forest")?;
    let link_holdout_auc = if holdout.is_empty() {
        None
    } else {
        let scores: Vec<f64> =
            holdout.iter().map(|e| forest.predict_proba(&e.features)).collect::<Result<_>>().stage("link holdout")?;
        let truth: Vec<bool> = holdout.iter().map(|e| e.positive).collect();
        Some(auc(&scores, &truth).stage("link holdout")?)
    };

    let batch = profile_vertices(&forest, &g, &test.selected, config.threshold, config.direction_mode)
        .stage("profile")?;
    let profiles = batch.profiles;
    let labels: Vec<bool> = profiles.iter().map(|p| g.label(p.vertex) == Some(Label::Anomalous)).collect();

    let cross_validation =
        k_fold_cv(&profiles, &labels, config.folds, derive_seed(seed, SEED_CV), &config.meta_forest)
            .stage("cross-validation")?;

    let ranked = rank_vertices(&profiles, config.rank_by, SortOrder::Descending);
    let anomalous = |v: VertexId| g.label(v) == Some(Label::Anomalous);
    let mut top_k = BTreeMap::new();
    for &k in &config.precision_k {
        if k <= ranked.len() {
            top_k.insert(k, precision_at_k(&ranked, anomalous, k).stage("precision@k")?);
        }
    }

    let mut gains = BTreeMap::new();
    let mut ranking: Vec<(f64, &'static str)> = Vec::new();
    for f in MetaFeature::ALL {
        let values: Vec<f64> = profiles.iter().map(|p| p.get(f)).collect();
        let gain = info_gain(&values, &labels, config.info_gain_bins).stage("information gain")?;
        gains.insert(f.name().to_string(), gain);
        ranking.push((gain, f.name()));
    }
    ranking.sort_by(|a, b| b.0.total_cmp(&a.0));

    let test_anomalous = test.labels.iter().filter(|l| **l == Some(Label::Anomalous)).count();
    let report = RunReport {
        run,
        seed,
        vertices: g.vertex_count(),
        edges: g.edge_count(),
        injected,
        test_anomalous,
        test_normal: test.selected.len() - test_anomalous,
        unscored: batch.isolated.len(),
        link_training_examples: train.len(),
        link_holdout_auc,
        cross_validation,
        precision_at_k: top_k,
        info_gain: gains,
        info_gain_ranking: ranking.into_iter().map(|(_, n)| n.to_string()).collect(),
    };
    info!(
        "run {run} (seed {seed}): auc={:?} fpr={:?} link_auc={:?}",
        report.cross_validation.mean.auc, report.cross_validation.mean.fpr, report.link_holdout_auc
    );
    Ok(report)
}
