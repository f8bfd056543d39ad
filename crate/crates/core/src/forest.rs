//! Seedable random forest for binary classification.
//!
//! Each tree is grown on a bootstrap resample with Gini splits over a random
//! subset of features per node, without a depth cap by default. The forest's
//! probability is the mean of the per-tree leaf positive fractions.
//!
//! Training is deterministic: examples are put in a canonical order before
//! resampling, and tree `i` draws from stream `i` of a ChaCha generator keyed
//! by the seed, so parallel and serial training agree bit for bit.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree_count: usize,
    /// `None` means ⌈√d⌉.
    pub features_per_split: Option<usize>,
    pub min_leaf_size: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { tree_count: 100, features_per_split: None, min_leaf_size: 1, max_depth: None }
    }
}

impl ForestParams {
    pub fn resolved_features_per_split(&self, feature_count: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (feature_count as f64).sqrt().ceil() as usize)
            .clamp(1, feature_count.max(1))
    }
}

/// One labelled row. `positive` is true for the class the forest scores,
/// which for link prediction means "edge does not exist".
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    pub positive: bool,
}

impl TrainingExample {
    pub fn new(features: Vec<f64>, positive: bool) -> Self {
        TrainingExample { features, positive }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Node {
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
    Leaf { negative: u32, positive: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf_fraction(&self, x: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { negative, positive } => {
                    return *positive as f64 / (*negative + *positive) as f64;
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Feature index used at the root split, if the root is not a leaf.
    pub fn root_feature(&self) -> Option<usize> {
        match self.nodes.first() {
            Some(Node::Split { feature, .. }) => Some(*feature),
            _ => None,
        }
    }

    fn validate(&self, feature_count: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        for node in &self.nodes {
            match *node {
                Node::Split { feature, threshold, left, right } => {
                    if feature >= feature_count {
                        return Err(Error::Format(format!(
                            "split feature {feature} out of range for {feature_count} features"
                        )));
                    }
                    if threshold.is_nan() {
                        return Err(Error::Format("NaN split threshold".into()));
                    }
                    let n = self.nodes.len() as u32;
                    if left >= n || right >= n || left == 0 || right == 0 {
                        return Err(Error::Format("child index out of range".into()));
                    }
                }
                Node::Leaf { negative, positive } => {
                    if negative == 0 && positive == 0 {
                        return Err(Error::Format("empty leaf".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkForest {
    trees: Vec<DecisionTree>,
    params: ForestParams,
    seed: u64,
    feature_count: usize,
}

impl LinkForest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Probability of the positive class: the mean leaf positive fraction.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_count {
            return Err(Error::Shape { expected: self.feature_count, got: x.len() });
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_fraction(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.par_iter().map(|x| self.predict_proba(x)).collect()
    }

    /// Checks structural invariants, e.g. after deserialising.
    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Format("forest without trees".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(self.feature_count))
    }
}

pub fn train_forest(examples: &[TrainingExample], params: &ForestParams, seed: u64) -> Result<LinkForest> {
    if examples.len() < 2 {
        return Err(Error::DegenerateTraining(format!("need at least 2 examples, got {}", examples.len())));
    }
    let d = examples[0].features.len();
    if d == 0 {
        return Err(Error::DegenerateTraining("examples have no features".into()));
    }
    if let Some(bad) = examples.iter().find(|e| e.features.len() != d) {
        return Err(Error::Shape { expected: d, got: bad.features.len() });
    }
    let positives = examples.iter().filter(|e| e.positive).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::DegenerateTraining("training data contains a single class".into()));
    }
    if params.tree_count == 0 {
        return Err(Error::Parameter("tree_count must be positive".into()));
    }
    if params.min_leaf_size == 0 {
        return Err(Error::Parameter("min_leaf_size must be positive".into()));
    }

    let mut order: Vec<&TrainingExample> = examples.iter().collect();
    order.sort_by(|a, b| canonical_cmp(a, b));
    let data = Columns {
        cols: (0..d).map(|f| order.iter().map(|e| e.features[f]).collect()).collect(),
        labels: order.iter().map(|e| e.positive).collect(),
    };
    let mtry = params.resolved_features_per_split(d);

    let trees = (0..params.tree_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            grow_tree(&data, params, mtry, &mut rng)
        })
        .collect();

    Ok(LinkForest { trees, params: params.clone(), seed, feature_count: d })
}

fn canonical_cmp(a: &TrainingExample, b: &TrainingExample) -> Ordering {
    for (x, y) in a.features.iter().zip(&b.features) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            other => return other,
        }
    }
    a.positive.cmp(&b.positive)
}

struct Columns {
    cols: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

/// Split quality (l0² + l1²)/nl + (r0² + r1²)/nr kept as an exact fraction;
/// maximising it minimises weighted child Gini impurity.
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(l: [u64; 2], r: [u64; 2]) -> Self {
        let nl = (l[0] + l[1]) as u128;
        let nr = (r[0] + r[1]) as u128;
        let sl = (l[0] as u128).pow(2) + (l[1] as u128).pow(2);
        let sr = (r[0] as u128).pow(2) + (r[1] as u128).pow(2);
        Score { num: sl * nr + sr * nl, den: nl * nr }
    }

    fn beats(&self, other: &Score) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    score: Score,
}

struct Frame {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

fn grow_tree(data: &Columns, params: &ForestParams, mtry: usize, rng: &mut ChaCha8Rng) -> DecisionTree {
    let n = data.labels.len();
    let d = data.cols.len();
    let mut idx: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n) as u32).collect();
    let mut scratch: Vec<(f64, bool)> = Vec::with_capacity(n);
    let mut part: Vec<u32> = Vec::with_capacity(n);
    let mut features: Vec<usize> = (0..d).collect();

    let mut nodes = vec![Node::Leaf { negative: 0, positive: 0 }];
    let mut stack = vec![Frame { node: 0, start: 0, end: n, depth: 0 }];

    while let Some(Frame { node, start, end, depth }) = stack.pop() {
        let rows = &idx[start..end];
        let pos = rows.iter().filter(|&&i| data.labels[i as usize]).count() as u32;
        let neg = rows.len() as u32 - pos;
        let leaf = Node::Leaf { negative: neg, positive: pos };

        let stop = pos == 0
            || neg == 0
            || rows.len() < 2 * params.min_leaf_size
            || params.max_depth.is_some_and(|m| depth >= m);
        if stop {
            nodes[node] = leaf;
            continue;
        }

        features.shuffle(rng);
        let (head, tail) = features.split_at(mtry);
        let mut candidates = head.to_vec();
        candidates.sort_unstable();
        let mut best = best_split(data, rows, &candidates, params.min_leaf_size, &mut scratch);
        if best.is_none() && !tail.is_empty() {
            // none of the drawn features can split this node; fall back to the rest
            let mut rest = tail.to_vec();
            rest.sort_unstable();
            best = best_split(data, rows, &rest, params.min_leaf_size, &mut scratch);
        }
        let Some(best) = best else {
            nodes[node] = leaf;
            continue;
        };

        part.clear();
        let col = &data.cols[best.feature];
        part.extend(rows.iter().copied().filter(|&i| col[i as usize] <= best.threshold));
        let mid = start + part.len();
        part.extend(rows.iter().copied().filter(|&i| col[i as usize] > best.threshold));
        idx[start..end].copy_from_slice(&part);

        let left = nodes.len();
        nodes.push(Node::Leaf { negative: 0, positive: 0 });
        nodes.push(Node::Leaf { negative: 0, positive: 0 });
        nodes[node] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: left as u32,
            right: left as u32 + 1,
        };
        stack.push(Frame { node: left + 1, start: mid, end, depth: depth + 1 });
        stack.push(Frame { node: left, start, end: mid, depth: depth + 1 });
    }
    DecisionTree { nodes }
}

/// Best split over `features` (ascending), ties kept at the lowest feature
/// index and then the lowest threshold.
fn best_split(
    data: &Columns,
    rows: &[u32],
    features: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, bool)>,
) -> Option<Best> {
    let mut total = [0u64; 2];
    for &i in rows {
        total[data.labels[i as usize] as usize] += 1;
    }
    let n = rows.len();
    let mut best: Option<Best> = None;
    for &f in features {
        let col = &data.cols[f];
        scratch.clear();
        scratch.extend(rows.iter().map(|&i| (col[i as usize], data.labels[i as usize])));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if scratch[0].0.total_cmp(&scratch[n - 1].0) == Ordering::Equal {
            continue;
        }
        let mut left = [0u64; 2];
        for k in 0..n - 1 {
            left[scratch[k].1 as usize] += 1;
            let (a, b) = (scratch[k].0, scratch[k + 1].0);
            if a.total_cmp(&b) == Ordering::Equal {
                continue;
            }
            let nl = k + 1;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = Score::new(left, right);
            if best.as_ref().is_none_or(|b| score.beats(&b.score)) {
                let mut threshold = a + (b - a) / 2.0;
                if !(threshold >= a && threshold < b) {
                    threshold = a;
                }
                best = Some(Best { feature: f, threshold, score });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ex(x: &[f64], positive: bool) -> TrainingExample {
        TrainingExample::new(x.to_vec(), positive)
    }

    fn separable() -> Vec<TrainingExample> {
        let mut v = Vec::new();
        for _ in 0..100 {
            v.push(ex(&[0.0], false));
            v.push(ex(&[1.0], true));
        }
        v
    }

    #[test]
    fn separable_single_feature() {
        let params = ForestParams { tree_count: 10, ..Default::default() };
        let f = train_forest(&separable(), &params, 3).unwrap();
        assert_eq!(f.trees().len(), 10);
        assert!(f.trees().iter().all(|t| t.root_feature() == Some(0)));
        assert_eq!(f.predict_proba(&[0.0]).unwrap(), 0.0);
        assert_eq!(f.predict_proba(&[1.0]).unwrap(), 1.0);
        assert!(f.predict_proba(&[0.9]).unwrap() > 0.5);
    }

    #[test]
    fn unsplittable_pair_gives_even_odds_on_average() {
        let data = vec![ex(&[0.5, 0.5], false), ex(&[0.5, 0.5], true)];
        let params = ForestParams { tree_count: 25, ..Default::default() };
        let mut mean = 0.0;
        for seed in 0..40 {
            let f = train_forest(&data, &params, seed).unwrap();
            let p = f.predict_proba(&[0.5, 0.5]).unwrap();
            assert!((0.0..=1.0).contains(&p));
            mean += p / 40.0;
        }
        assert!((0.4..=0.6).contains(&mean), "mean vote {mean}");
    }

    #[test]
    fn same_seed_same_forest() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<_> = (0..300)
            .map(|_| {
                let x: f64 = rng.gen();
                let y: f64 = rng.gen();
                ex(&[x, y, rng.gen()], x + 0.3 * y + 0.2 * rng.gen::<f64>() > 0.7)
            })
            .collect();
        let params = ForestParams { tree_count: 20, ..Default::default() };
        let a = train_forest(&data, &params, 11).unwrap();
        let b = train_forest(&data, &params, 11).unwrap();
        assert_eq!(a, b);
        let probe: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen(), rng.gen(), rng.gen()]).collect();
        let pa: Vec<u64> = a.predict_batch(&probe).unwrap().iter().map(|p| p.to_bits()).collect();
        let pb: Vec<u64> = b.predict_batch(&probe).unwrap().iter().map(|p| p.to_bits()).collect();
        assert_eq!(pa, pb);

        let mut shuffled = data.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(train_forest(&shuffled, &params, 11).unwrap(), a);
    }

    #[test]
    fn hand_built_forests() {
        let pure = LinkForest {
            trees: vec![DecisionTree { nodes: vec![Node::Leaf { negative: 0, positive: 4 }] }],
            params: ForestParams { tree_count: 1, ..Default::default() },
            seed: 0,
            feature_count: 1,
        };
        pure.validate().unwrap();
        assert_eq!(pure.predict_proba(&[3.0]).unwrap(), 1.0);

        let split = LinkForest {
            trees: vec![
                DecisionTree { nodes: vec![Node::Leaf { negative: 3, positive: 3 }] },
                DecisionTree {
                    nodes: vec![
                        Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
                        Node::Leaf { negative: 1, positive: 1 },
                        Node::Leaf { negative: 0, positive: 1 },
                    ],
                },
            ],
            params: ForestParams { tree_count: 2, ..Default::default() },
            seed: 0,
            feature_count: 1,
        };
        assert_eq!(split.predict_proba(&[0.0]).unwrap(), 0.5);
        assert_eq!(split.predict_proba(&[1.0]).unwrap(), 0.75);

        let broken = LinkForest {
            trees: vec![DecisionTree { nodes: vec![Node::Leaf { negative: 0, positive: 0 }] }],
            ..pure.clone()
        };
        assert!(broken.validate().is_err());
    }

    #[test]
    fn training_errors() {
        let params = ForestParams::default();
        assert!(matches!(
            train_forest(&[ex(&[1.0], true)], &params, 0),
            Err(Error::DegenerateTraining(_))
        ));
        assert!(matches!(
            train_forest(&[ex(&[1.0], true), ex(&[2.0], true)], &params, 0),
            Err(Error::DegenerateTraining(_))
        ));
        assert!(matches!(
            train_forest(&[ex(&[1.0], true), ex(&[2.0, 1.0], false)], &params, 0),
            Err(Error::Shape { .. })
        ));
        let f = train_forest(&separable(), &params, 0).unwrap();
        assert!(matches!(f.predict_proba(&[1.0, 2.0]), Err(Error::Shape { expected: 1, got: 2 })));
    }

    #[test]
    fn min_leaf_size_is_respected() {
        let data: Vec<_> = (0..40).map(|i| ex(&[i as f64], i % 2 == 0)).collect();
        let params = ForestParams { tree_count: 5, min_leaf_size: 5, ..Default::default() };
        let f = train_forest(&data, &params, 1).unwrap();
        for t in f.trees() {
            for node in &t.nodes {
                if let Node::Leaf { negative, positive } = node {
                    assert!(negative + positive >= 5);
                }
            }
        }
        f.validate().unwrap();
    }

    #[test]
    fn depth_cap_limits_tree() {
        let data: Vec<_> = (0..64).map(|i| ex(&[i as f64], i % 2 == 0)).collect();
        let params = ForestParams { tree_count: 3, max_depth: Some(1), ..Default::default() };
        let f = train_forest(&data, &params, 1).unwrap();
        assert!(f.trees().iter().all(|t| t.node_count() <= 3));
    }
}
