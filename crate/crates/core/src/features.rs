//! Topological link features for a vertex pair.
//!
//! Directed graphs get 16 features, undirected graphs 7; the order is fixed
//! by [`DIRECTED_FEATURES`] and [`UNDIRECTED_FEATURES`]. None of the values
//! identify the vertices themselves.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{intersection_size, Direction, Graph, VertexId};

pub const DIRECTED_FEATURES: [&str; 16] = [
    "total_friends",
    "common_friends_in",
    "common_friends_out",
    "common_friends_bi",
    "jaccard",
    "preferential_attachment",
    "transitive_friends",
    "opposite_direction_friends",
    "knn_w1",
    "knn_w2",
    "knn_w3",
    "knn_w4",
    "knn_w5",
    "knn_w6",
    "knn_w7",
    "knn_w8",
];

pub const UNDIRECTED_FEATURES: [&str; 7] = [
    "total_friends",
    "common_friends",
    "jaccard",
    "preferential_attachment",
    "adamic_adar",
    "knn_w9",
    "knn_w10",
];

pub fn feature_names(directed: bool) -> &'static [&'static str] {
    if directed {
        &DIRECTED_FEATURES
    } else {
        &UNDIRECTED_FEATURES
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeFeatureVector {
    directed: bool,
    values: Vec<f64>,
}

impl EdgeFeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn names(&self) -> &'static [&'static str] {
        feature_names(self.directed)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names().iter().position(|&n| n == name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_pair(g: &Graph, v: VertexId, u: VertexId) -> Result<()> {
    for x in [v, u] {
        if !g.contains(x) {
            return Err(Error::UnknownVertex(x.to_string()));
        }
    }
    if v == u {
        return Err(Error::InvalidPair(v, u));
    }
    Ok(())
}

fn require_directed(g: &Graph, what: &str) -> Result<()> {
    if g.is_directed() {
        Ok(())
    } else {
        Err(Error::Mode(format!("{what} is only defined for directed graphs")))
    }
}

#[inline]
fn union_size(a: &[VertexId], b: &[VertexId]) -> usize {
    a.len() + b.len() - intersection_size(a, b)
}

#[inline]
fn jaccard_of(inter: usize, union: usize) -> f64 {
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[inline]
fn knn_weight(degree: usize) -> f64 {
    1.0 / (1.0 + degree as f64).sqrt()
}

pub fn total_friends(g: &Graph, v: VertexId, u: VertexId) -> Result<usize> {
    check_pair(g, v, u)?;
    Ok(union_size(g.adj(v, Direction::All), g.adj(u, Direction::All)))
}

pub fn common_friends(g: &Graph, v: VertexId, u: VertexId, mode: Direction) -> Result<usize> {
    check_pair(g, v, u)?;
    if mode != Direction::All {
        require_directed(g, "directional common friends")?;
    }
    Ok(intersection_size(g.adj(v, mode), g.adj(u, mode)))
}

/// Returns 0 when both neighbourhoods are empty.
pub fn jaccard(g: &Graph, v: VertexId, u: VertexId) -> Result<f64> {
    check_pair(g, v, u)?;
    let (a, b) = (g.adj(v, Direction::All), g.adj(u, Direction::All));
    let inter = intersection_size(a, b);
    Ok(jaccard_of(inter, a.len() + b.len() - inter))
}

pub fn preferential_attachment(g: &Graph, v: VertexId, u: VertexId) -> Result<u64> {
    check_pair(g, v, u)?;
    Ok(g.degree(v) as u64 * g.degree(u) as u64)
}

/// |Γ_out(v) ∩ Γ_in(u)|: the number of two-step paths v → w → u.
pub fn transitive_friends(g: &Graph, v: VertexId, u: VertexId) -> Result<usize> {
    check_pair(g, v, u)?;
    require_directed(g, "transitive friends")?;
    Ok(intersection_size(g.adj(v, Direction::Out), g.adj(u, Direction::In)))
}

pub fn opposite_direction_friends(g: &Graph, v: VertexId, u: VertexId) -> Result<u8> {
    check_pair(g, v, u)?;
    require_directed(g, "opposite direction friends")?;
    Ok(g.has_edge(u, v) as u8)
}

/// Natural-log Adamic-Adar index. Shared neighbours of degree ≤ 1 are skipped.
pub fn adamic_adar(g: &Graph, v: VertexId, u: VertexId) -> Result<f64> {
    check_pair(g, v, u)?;
    if g.is_directed() {
        return Err(Error::Mode("adamic-adar is only defined for undirected graphs".into()));
    }
    Ok(adamic_adar_unchecked(g, v, u))
}

fn adamic_adar_unchecked(g: &Graph, v: VertexId, u: VertexId) -> f64 {
    let (a, b) = (g.adj(v, Direction::All), g.adj(u, Direction::All));
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let d = g.degree(a[i]);
                if d > 1 {
                    sum += 1.0 / (d as f64).ln();
                }
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// kNN weights 1–8 for directed graphs, 9–10 for undirected ones.
pub fn knn_weights(g: &Graph, v: VertexId, u: VertexId) -> Result<Vec<f64>> {
    check_pair(g, v, u)?;
    let mut out = Vec::with_capacity(8);
    push_knn(g, v, u, &mut out);
    Ok(out)
}

fn push_knn(g: &Graph, v: VertexId, u: VertexId, out: &mut Vec<f64>) {
    if g.is_directed() {
        let in_v = knn_weight(g.adj(v, Direction::In).len());
        let in_u = knn_weight(g.adj(u, Direction::In).len());
        let out_v = knn_weight(g.adj(v, Direction::Out).len());
        let out_u = knn_weight(g.adj(u, Direction::Out).len());
        out.extend_from_slice(&[
            in_v + in_u,
            in_v + out_u,
            out_v + in_u,
            out_v + out_u,
            in_v * in_u,
            in_v * out_u,
            out_v * in_u,
            out_v * out_u,
        ]);
    } else {
        let wv = knn_weight(g.degree(v));
        let wu = knn_weight(g.degree(u));
        out.extend_from_slice(&[wv + wu, wv * wu]);
    }
}

/// Appends the feature vector of `(v, u)` to `out` without validating the pair.
pub(crate) fn write_features(g: &Graph, v: VertexId, u: VertexId, out: &mut Vec<f64>) {
    let (a, b) = (g.adj(v, Direction::All), g.adj(u, Direction::All));
    let common = intersection_size(a, b);
    let total = a.len() + b.len() - common;
    let pa = (a.len() as f64) * (b.len() as f64);
    out.push(total as f64);
    if g.is_directed() {
        out.push(intersection_size(g.adj(v, Direction::In), g.adj(u, Direction::In)) as f64);
        out.push(intersection_size(g.adj(v, Direction::Out), g.adj(u, Direction::Out)) as f64);
        out.push(intersection_size(g.adj(v, Direction::Bi), g.adj(u, Direction::Bi)) as f64);
        out.push(jaccard_of(common, total));
        out.push(pa);
        out.push(intersection_size(g.adj(v, Direction::Out), g.adj(u, Direction::In)) as f64);
        out.push(if g.has_edge(u, v) { 1.0 } else { 0.0 });
    } else {
        out.push(common as f64);
        out.push(jaccard_of(common, total));
        out.push(pa);
        out.push(adamic_adar_unchecked(g, v, u));
    }
    push_knn(g, v, u, out);
}

pub fn extract_edge_features(g: &Graph, v: VertexId, u: VertexId) -> Result<EdgeFeatureVector> {
    check_pair(g, v, u)?;
    let mut values = Vec::with_capacity(feature_names(g.is_directed()).len());
    write_features(g, v, u, &mut values);
    Ok(EdgeFeatureVector { directed: g.is_directed(), values })
}

/// Feature vectors for many pairs, computed in parallel. Output order follows
/// `pairs`.
pub fn extract_batch(g: &Graph, pairs: &[(VertexId, VertexId)]) -> Result<Vec<Vec<f64>>> {
    pairs
        .par_iter()
        .map(|&(v, u)| extract_edge_features(g, v, u).map(EdgeFeatureVector::into_values))
        .collect()
}
