//! Data generation: Barabási–Albert graphs, anomaly injection, test-vertex
//! sampling and the link classifier's training set.
//!
//! Every routine takes an explicit seed and draws from a single ChaCha stream,
//! so outputs are a pure function of their arguments.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::extract_batch;
use crate::forest::TrainingExample;
use crate::graph::{sample_degree, Direction, Graph, Label, VertexId};

/// Rejection loops give up after this many attempts per requested item.
pub const ATTEMPTS_PER_ITEM: usize = 100;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Undirected preferential-attachment graph on `n` vertices named `0..n`.
/// Starts from a clique of `m + 1` vertices; every later vertex attaches to
/// `m` distinct existing vertices chosen with probability ∝ degree.
pub fn generate_ba(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m == 0 || n <= m {
        return Err(Error::Parameter(format!("BA model needs n > m >= 1, got n={n}, m={m}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut edges: Vec<(VertexId, VertexId)> = Vec::with_capacity(n * m);
    // every vertex appears here once per incident edge
    let mut endpoints: Vec<VertexId> = Vec::with_capacity(2 * n * m);
    for a in 0..=m as VertexId {
        for b in a + 1..=m as VertexId {
            edges.push((a, b));
            endpoints.extend([a, b]);
        }
    }
    let mut chosen: Vec<VertexId> = Vec::with_capacity(m);
    for t in (m + 1)..n {
        let t = t as VertexId;
        chosen.clear();
        while chosen.len() < m {
            let c = endpoints[rng.gen_range(0..endpoints.len())];
            if !chosen.contains(&c) {
                chosen.push(c);
            }
        }
        for &c in &chosen {
            edges.push((t, c));
            endpoints.extend([t, c]);
        }
    }
    let names = (0..n).map(|i| i.to_string()).collect();
    Ok(Graph::from_parts(names, edges, false, None)?.0)
}

/// What [`inject_anomalies`] added, in the returned graph's ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InjectionRecord {
    pub injected: Vec<VertexId>,
    pub degrees: Vec<usize>,
    pub targets: Vec<Vec<VertexId>>,
}

/// Adds `n` anomalous vertices. Each draws its degree from the host's
/// empirical degree distribution (redrawing zeros) and connects to that many
/// distinct host vertices chosen uniformly; edges point away from the new
/// vertex on directed graphs. Targets never include other injected vertices.
///
/// Pre-existing vertices keep their names and labels (unlabelled hosts become
/// all-normal); injected vertices get fresh numeric names.
pub fn inject_anomalies(g: &Graph, n: usize, seed: u64) -> Result<(Graph, InjectionRecord)> {
    let host_n = g.vertex_count();
    if n == 0 {
        return Err(Error::Parameter("number of injected vertices must be at least 1".into()));
    }
    if n > host_n {
        return Err(Error::Parameter(format!("cannot inject {n} vertices into a graph of {host_n}")));
    }
    let mut rng = rng_from_seed(seed);
    let budget = ATTEMPTS_PER_ITEM * n;
    let mut attempts = 0;
    let mut draws: Vec<(usize, Vec<VertexId>)> = Vec::with_capacity(n);
    for _ in 0..n {
        let k = loop {
            if attempts >= budget {
                return Err(Error::exhausted(attempts, "host graph has no vertex with positive degree"));
            }
            attempts += 1;
            let k = sample_degree(g, &mut rng);
            if k > 0 {
                break k;
            }
        };
        let targets = index::sample(&mut rng, host_n, k).into_iter().map(|t| t as VertexId).collect();
        draws.push((k, targets));
    }

    let first_free = g.names().iter().filter_map(|s| s.parse::<u64>().ok()).max().map_or(0, |m| m + 1);
    let new_names: Vec<String> = (0..n as u64).map(|i| (first_free + i).to_string()).collect();

    let directed = g.is_directed();
    let (mut names, mut edges, labels) = g.clone().into_parts();
    let mut labels = labels.unwrap_or_else(|| vec![Label::Normal; host_n]);
    for (i, (_, targets)) in draws.iter().enumerate() {
        let id = (host_n + i) as VertexId;
        edges.extend(targets.iter().map(|&t| (id, t)));
    }
    names.extend(new_names.iter().cloned());
    labels.extend(std::iter::repeat_n(Label::Anomalous, n));
    let (out, _) = Graph::from_parts(names, edges, directed, Some(labels))?;

    let lookup = |name: &str| out.vertex_id(name).expect("name survives rebuild");
    let injected = new_names.iter().map(|s| lookup(s)).collect();
    let degrees = draws.iter().map(|(k, _)| *k).collect();
    let targets = draws
        .iter()
        .map(|(_, ts)| ts.iter().map(|&t| lookup(g.name(t))).collect())
        .collect();
    Ok((out, InjectionRecord { injected, degrees, targets }))
}

/// Number of vertices to inject so that they make up `fraction` of the
/// resulting graph.
pub fn injection_count(host_vertices: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!("anomaly fraction must be in (0, 1), got {fraction}")));
    }
    Ok(((host_vertices as f64 * fraction / (1.0 - fraction)).round() as usize).max(1))
}

/// Vertices accepted by [`sample_test_vertices`] and the edges collected for
/// them, oriented away from the accepted vertex.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TestSet {
    pub selected: Vec<VertexId>,
    pub labels: Vec<Option<Label>>,
    pub edges: Vec<(VertexId, VertexId)>,
}

impl TestSet {
    /// Selected vertices plus every endpoint of their edges.
    pub fn endpoints(&self) -> HashSet<VertexId> {
        let mut out: HashSet<VertexId> = self.selected.iter().copied().collect();
        for &(a, b) in &self.edges {
            out.insert(a);
            out.insert(b);
        }
        out
    }

    pub fn extend(&mut self, other: TestSet) {
        self.selected.extend(other.selected);
        self.labels.extend(other.labels);
        self.edges.extend(other.edges);
    }
}

/// Repeatedly draws a uniform vertex and accepts it when it matches
/// `label_filter` (ignored on unlabelled graphs), has more than `min_friends`
/// neighbours, and more than `min_friends` of those neighbours have more than
/// `min_friends` neighbours themselves. A vertex is accepted at most once.
pub fn sample_test_vertices(
    g: &Graph,
    n: usize,
    label_filter: Option<Label>,
    min_friends: usize,
    seed: u64,
) -> Result<TestSet> {
    let mut rng = rng_from_seed(seed);
    let budget = ATTEMPTS_PER_ITEM * n;
    let filter = label_filter.filter(|_| g.labels().is_some());
    let mut taken: HashSet<VertexId> = HashSet::new();
    let mut out = TestSet::default();
    let mut attempts = 0;
    let mut temp = Vec::new();
    while out.selected.len() < n {
        if attempts >= budget {
            return Err(Error::exhausted(
                attempts,
                format!(
                    "accepted {} of {n} test vertices with min_friends={min_friends}",
                    out.selected.len()
                ),
            ));
        }
        attempts += 1;
        let v = rng.gen_range(0..g.vertex_count()) as VertexId;
        if taken.contains(&v) {
            continue;
        }
        if filter.is_some_and(|l| g.label(v) != Some(l)) {
            continue;
        }
        let neighbours = g.adj(v, Direction::All);
        if neighbours.len() <= min_friends {
            continue;
        }
        temp.clear();
        temp.extend(neighbours.iter().copied().filter(|&u| g.degree(u) > min_friends).map(|u| (v, u)));
        if temp.len() > min_friends {
            taken.insert(v);
            out.selected.push(v);
            out.labels.push(g.label(v));
            out.edges.extend_from_slice(&temp);
        }
    }
    Ok(out)
}

/// Link classifier training data with the sampled vertex pairs alongside.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkTrainingSet {
    pub pairs: Vec<(VertexId, VertexId)>,
    pub examples: Vec<TrainingExample>,
}

/// `size_per_class` existing edges (negatives) drawn uniformly from E and
/// `size_per_class` non-edges (positives) between uniformly drawn vertices.
/// No pair touches `excluded`. Negatives come first in the output.
pub fn build_link_training_set(
    g: &Graph,
    excluded: &HashSet<VertexId>,
    size_per_class: usize,
    seed: u64,
) -> Result<LinkTrainingSet> {
    if size_per_class == 0 {
        return Ok(LinkTrainingSet::default());
    }
    let mut rng = rng_from_seed(seed);
    let allowed: Vec<bool> = g.vertices().map(|v| !excluded.contains(&v)).collect();

    let eligible: Vec<(VertexId, VertexId)> =
        g.edges().filter(|&(a, b)| allowed[a as usize] && allowed[b as usize]).collect();
    if eligible.len() < size_per_class {
        return Err(Error::exhausted(
            eligible.len(),
            format!("only {} eligible edges for {size_per_class} negative examples", eligible.len()),
        ));
    }
    let mut pairs: Vec<(VertexId, VertexId)> =
        index::sample(&mut rng, eligible.len(), size_per_class).into_iter().map(|i| eligible[i]).collect();

    let candidates: Vec<VertexId> = g.vertices().filter(|&v| allowed[v as usize]).collect();
    let budget = ATTEMPTS_PER_ITEM * size_per_class;
    let mut seen: HashSet<(VertexId, VertexId)> = HashSet::with_capacity(size_per_class);
    let mut attempts = 0;
    while seen.len() < size_per_class {
        if attempts >= budget || candidates.len() < 2 {
            return Err(Error::exhausted(
                attempts,
                format!("found {} of {size_per_class} non-edges between eligible vertices", seen.len()),
            ));
        }
        attempts += 1;
        let v = candidates[rng.gen_range(0..candidates.len())];
        let u = candidates[rng.gen_range(0..candidates.len())];
        if v == u || g.has_edge(v, u) {
            continue;
        }
        let key = if g.is_directed() { (v, u) } else { (v.min(u), v.max(u)) };
        if seen.insert(key) {
            pairs.push(key);
        }
    }

    let features = extract_batch(g, &pairs)?;
    let examples = features
        .into_iter()
        .enumerate()
        .map(|(i, f)| TrainingExample::new(f, i >= size_per_class))
        .collect();
    Ok(LinkTrainingSet { pairs, examples })
}
