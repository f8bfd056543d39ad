//! Per-vertex anomaly meta-features built from edge non-existence scores.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_names, write_features};
use crate::forest::LinkForest;
use crate::graph::{Direction, Graph, VertexId};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Anything that can say how unlikely an existing edge is.
pub trait EdgeScorer: Sync {
    /// Probability that the directed pair `(v, u)` should not exist.
    fn non_existence_probability(&self, g: &Graph, v: VertexId, u: VertexId) -> Result<f64>;
}

impl EdgeScorer for LinkForest {
    fn non_existence_probability(&self, g: &Graph, v: VertexId, u: VertexId) -> Result<f64> {
        let expected = feature_names(g.is_directed()).len();
        if self.feature_count() != expected {
            return Err(Error::Shape { expected, got: self.feature_count() });
        }
        let mut x = Vec::with_capacity(expected);
        write_features(g, v, u, &mut x);
        self.predict_proba(&x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaFeature {
    AbnormalityProbability,
    EdgesProbabilityStdv,
    SumEdgeLabel,
    MeanPredictedLinkLabel,
    PredictedLabelStdv,
    EdgesProbabilityMedian,
    EdgeCount,
}

impl MetaFeature {
    pub const ALL: [MetaFeature; 7] = [
        MetaFeature::AbnormalityProbability,
        MetaFeature::EdgesProbabilityStdv,
        MetaFeature::SumEdgeLabel,
        MetaFeature::MeanPredictedLinkLabel,
        MetaFeature::PredictedLabelStdv,
        MetaFeature::EdgesProbabilityMedian,
        MetaFeature::EdgeCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetaFeature::AbnormalityProbability => "abnormality_probability",
            MetaFeature::EdgesProbabilityStdv => "edges_probability_stdv",
            MetaFeature::SumEdgeLabel => "sum_edge_label",
            MetaFeature::MeanPredictedLinkLabel => "mean_predicted_link_label",
            MetaFeature::PredictedLabelStdv => "predicted_label_stdv",
            MetaFeature::EdgesProbabilityMedian => "edges_probability_median",
            MetaFeature::EdgeCount => "edge_count",
        }
    }
}

impl fmt::Display for MetaFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetaFeature::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Parameter(format!("unknown meta-feature `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexAnomalyProfile {
    pub vertex: VertexId,
    pub abnormality_probability: f64,
    pub edges_probability_stdv: f64,
    pub sum_edge_label: usize,
    pub mean_predicted_link_label: f64,
    pub predicted_label_stdv: f64,
    pub edges_probability_median: f64,
    pub edge_count: usize,
}

impl VertexAnomalyProfile {
    pub fn get(&self, feature: MetaFeature) -> f64 {
        match feature {
            MetaFeature::AbnormalityProbability => self.abnormality_probability,
            MetaFeature::EdgesProbabilityStdv => self.edges_probability_stdv,
            MetaFeature::SumEdgeLabel => self.sum_edge_label as f64,
            MetaFeature::MeanPredictedLinkLabel => self.mean_predicted_link_label,
            MetaFeature::PredictedLabelStdv => self.predicted_label_stdv,
            MetaFeature::EdgesProbabilityMedian => self.edges_probability_median,
            MetaFeature::EdgeCount => self.edge_count as f64,
        }
    }

    /// The seven values in [`MetaFeature::ALL`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        MetaFeature::ALL.iter().map(|&f| self.get(f)).collect()
    }
}

/// Edges of `v` to score under `mode`, each oriented as it is stored in `g`.
fn oriented_edges(g: &Graph, v: VertexId, mode: Direction) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
    g.adj(v, mode).iter().map(move |&u| {
        if !g.is_directed() {
            return (v, u);
        }
        match mode {
            Direction::Out => (v, u),
            Direction::In => (u, v),
            Direction::All | Direction::Bi => {
                if g.has_edge(v, u) {
                    (v, u)
                } else {
                    (u, v)
                }
            }
        }
    })
}

/// EP(v): the non-existence probability of each edge of `v` under `mode`.
pub fn edge_probabilities<S: EdgeScorer + ?Sized>(
    scorer: &S,
    g: &Graph,
    v: VertexId,
    mode: Direction,
) -> Result<Vec<(VertexId, f64)>> {
    let neighbours = g.neighbors(v, mode)?;
    if neighbours.is_empty() {
        return Err(Error::EmptyNeighborhood(v));
    }
    neighbours
        .iter()
        .zip(oriented_edges(g, v, mode))
        .map(|(&u, (a, b))| scorer.non_existence_probability(g, a, b).map(|p| (u, p)))
        .collect()
}

/// The seven meta-features of one vertex. An edge counts as anomalous when
/// its probability is at least `threshold`; deviations are population
/// standard deviations and the median of an even-sized set is the mean of the
/// two central values.
pub fn vertex_profile(ep: &[f64], threshold: f64, vertex: VertexId) -> Result<VertexAnomalyProfile> {
    if ep.is_empty() {
        return Err(Error::EmptyNeighborhood(vertex));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let n = ep.len();
    let nf = n as f64;
    let (lo, hi) = ep.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let mean = (ep.iter().sum::<f64>() / nf).clamp(lo, hi);
    let stdv = (ep.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / nf).sqrt();

    let flagged = ep.iter().filter(|&&p| p >= threshold).count();
    let label_mean = flagged as f64 / nf;
    let label_stdv = ((flagged as f64 * (1.0 - label_mean).powi(2)
        + (n - flagged) as f64 * label_mean.powi(2))
        / nf)
        .sqrt();

    let mut sorted = ep.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };

    Ok(VertexAnomalyProfile {
        vertex,
        abnormality_probability: mean,
        edges_probability_stdv: stdv,
        sum_edge_label: flagged,
        mean_predicted_link_label: label_mean,
        predicted_label_stdv: label_stdv,
        edges_probability_median: median,
        edge_count: n,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileBatch {
    pub profiles: Vec<VertexAnomalyProfile>,
    /// Requested vertices with no edges under the scoring direction.
    pub isolated: Vec<VertexId>,
}

/// Profiles `vertices` in parallel; output follows input order. Vertices with
/// no edges are reported in `isolated` instead of failing the batch.
pub fn profile_vertices<S: EdgeScorer + ?Sized>(
    scorer: &S,
    g: &Graph,
    vertices: &[VertexId],
    threshold: f64,
    mode: Direction,
) -> Result<ProfileBatch> {
    let results: Vec<Result<Option<VertexAnomalyProfile>>> = vertices
        .par_iter()
        .map(|&v| match edge_probabilities(scorer, g, v, mode) {
            Err(Error::EmptyNeighborhood(_)) => Ok(None),
            Err(e) => Err(e),
            Ok(ep) => {
                let ps: Vec<f64> = ep.into_iter().map(|(_, p)| p).collect();
                vertex_profile(&ps, threshold, v).map(Some)
            }
        })
        .collect();
    let mut batch = ProfileBatch::default();
    for (&v, r) in vertices.iter().zip(results) {
        match r? {
            Some(p) => batch.profiles.push(p),
            None => batch.isolated.push(v),
        }
    }
    Ok(batch)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SortOrder {
    Ascending,
    Descending,
}

/// Vertices ordered by `by`; ties go to the lower vertex id.
pub fn rank_vertices(profiles: &[VertexAnomalyProfile], by: MetaFeature, order: SortOrder) -> Vec<VertexId> {
    let mut keyed: Vec<(f64, VertexId)> = profiles.iter().map(|p| (p.get(by), p.vertex)).collect();
    keyed.sort_by(|a, b| {
        let primary = match order {
            SortOrder::Ascending => a.0.total_cmp(&b.0),
            SortOrder::Descending => b.0.total_cmp(&a.0),
        };
        primary.then(a.1.cmp(&b.1))
    });
    keyed.into_iter().map(|(_, v)| v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use std::collections::HashMap;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn profile_of_three_low_scores() {
        let p = vertex_profile(&[0.2, 0.4, 0.6], 0.8, 0).unwrap();
        assert!(close(p.abnormality_probability, 0.4));
        assert!(close(p.edges_probability_median, 0.4));
        assert_eq!(p.sum_edge_label, 0);
        assert_eq!(p.mean_predicted_link_label, 0.0);
        assert_eq!(p.predicted_label_stdv, 0.0);
        assert!((p.edges_probability_stdv - 0.1633).abs() < 1e-4);
        assert!(close(p.edges_probability_stdv, (0.08f64 / 3.0).sqrt()));
        assert_eq!(p.edge_count, 3);
    }

    #[test]
    fn threshold_boundary_is_anomalous() {
        let p = vertex_profile(&[0.8], 0.8, 0).unwrap();
        assert_eq!(p.sum_edge_label, 1);
        assert_eq!(p.mean_predicted_link_label, 1.0);
        assert_eq!(p.predicted_label_stdv, 0.0);
        assert_eq!(p.edges_probability_stdv, 0.0);
    }

    #[test]
    fn mixed_scores() {
        let p = vertex_profile(&[0.79, 0.81, 0.95, 0.10], 0.8, 0).unwrap();
        assert_eq!(p.sum_edge_label, 2);
        assert_eq!(p.mean_predicted_link_label, 0.5);
        assert!(close(p.predicted_label_stdv, 0.5));
        assert!(close(p.edges_probability_median, 0.80));
    }

    #[test]
    fn profile_errors() {
        assert!(matches!(vertex_profile(&[], 0.8, 4), Err(Error::EmptyNeighborhood(4))));
        assert!(matches!(vertex_profile(&[0.5], 1.0, 0), Err(Error::Parameter(_))));
        assert!(matches!(vertex_profile(&[0.5], 0.0, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn mean_stays_within_range_for_constant_scores() {
        let p = vertex_profile(&[0.1, 0.1, 0.1], 0.8, 0).unwrap();
        assert_eq!(p.abnormality_probability, 0.1);
    }

    struct Constant(f64);

    impl EdgeScorer for Constant {
        fn non_existence_probability(&self, _: &Graph, _: VertexId, _: VertexId) -> Result<f64> {
            Ok(self.0)
        }
    }

    struct Table(HashMap<(VertexId, VertexId), f64>);

    impl EdgeScorer for Table {
        fn non_existence_probability(&self, _: &Graph, v: VertexId, u: VertexId) -> Result<f64> {
            Ok(self.0[&(v, u)])
        }
    }

    #[test]
    fn edge_probabilities_with_stub_scorers() {
        let (g, _) = build_graph([("v", "a"), ("v", "b"), ("v", "c"), ("a", "b")], false).unwrap();
        let v = g.vertex_id("v").unwrap();
        let ep = edge_probabilities(&Constant(0.5), &g, v, Direction::All).unwrap();
        assert_eq!(ep.len(), 3);
        assert!(ep.iter().all(|&(_, p)| p == 0.5));

        let table: HashMap<_, _> =
            g.adj(v, Direction::All).iter().enumerate().map(|(i, &u)| ((v, u), i as f64 / 10.0)).collect();
        let ep = edge_probabilities(&Table(table.clone()), &g, v, Direction::All).unwrap();
        for (u, p) in ep {
            assert_eq!(p, table[&(v, u)]);
        }
    }

    #[test]
    fn directed_edges_keep_their_orientation() {
        let (g, _) = build_graph([("v", "a"), ("b", "v")], true).unwrap();
        let id = |s| g.vertex_id(s).unwrap();
        let (v, a, b) = (id("v"), id("a"), id("b"));
        let table = Table([((v, a), 0.1), ((b, v), 0.9)].into_iter().collect());
        let out = edge_probabilities(&table, &g, v, Direction::Out).unwrap();
        assert_eq!(out, vec![(a, 0.1)]);
        let inbound = edge_probabilities(&table, &g, v, Direction::In).unwrap();
        assert_eq!(inbound, vec![(b, 0.9)]);
        let mut all = edge_probabilities(&table, &g, v, Direction::All).unwrap();
        all.sort_by_key(|&(u, _)| u);
        let mut want = vec![(a, 0.1), (b, 0.9)];
        want.sort_by_key(|&(u, _)| u);
        assert_eq!(all, want);
    }

    #[test]
    fn isolated_vertices_are_reported() {
        let (g, _) = build_graph([("v", "a"), ("b", "v")], true).unwrap();
        let a = g.vertex_id("a").unwrap();
        assert!(matches!(edge_probabilities(&Constant(0.3), &g, a, Direction::Out), Err(Error::EmptyNeighborhood(_))));
        let batch = profile_vertices(&Constant(0.3), &g, &[a, g.vertex_id("v").unwrap()], 0.8, Direction::Out).unwrap();
        assert_eq!(batch.isolated, vec![a]);
        assert_eq!(batch.profiles.len(), 1);
    }

    fn profile(vertex: VertexId, p: f64) -> VertexAnomalyProfile {
        vertex_profile(&[p], 0.8, vertex).unwrap()
    }

    #[test]
    fn ranking() {
        let ps = vec![profile(0, 0.9), profile(1, 0.1), profile(2, 0.5)];
        let desc = rank_vertices(&ps, MetaFeature::AbnormalityProbability, SortOrder::Descending);
        assert_eq!(desc, vec![0, 2, 1]);
        let mut asc = rank_vertices(&ps, MetaFeature::AbnormalityProbability, SortOrder::Ascending);
        asc.reverse();
        assert_eq!(asc, desc);

        let ties = vec![profile(5, 0.3), profile(2, 0.3), profile(9, 0.3)];
        assert_eq!(rank_vertices(&ties, MetaFeature::EdgeCount, SortOrder::Descending), vec![2, 5, 9]);
        assert!(matches!("bogus".parse::<MetaFeature>(), Err(Error::Parameter(_))));
        assert_eq!("edge_count".parse::<MetaFeature>().unwrap(), MetaFeature::EdgeCount);
    }
}
