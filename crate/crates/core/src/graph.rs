//! Immutable graph storage.
//!
//! Vertex names are interned to dense ids at construction time. Every
//! neighbourhood (`in`, `out`, `bi` and their union) is materialised as a
//! sorted CSR row so set intersections are linear merge scans. Ids follow a
//! canonical name order, which makes construction independent of the order
//! edges are supplied in.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "0" | "normal" => Ok(Label::Normal),
            "1" | "anomalous" => Ok(Label::Anomalous),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// Which neighbourhood of a vertex to look at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Γ(v); for directed graphs Γ_in(v) ∪ Γ_out(v).
    All,
    In,
    Out,
    /// Γ_in(v) ∩ Γ_out(v).
    Bi,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "all" => Ok(Direction::All),
            "in" => Ok(Direction::In),
            "out" => Ok(Direction::Out),
            "bi" => Ok(Direction::Bi),
            other => Err(format!("unknown direction `{other}` (expected all|in|out|bi)")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::All => "all",
            Direction::In => "in",
            Direction::Out => "out",
            Direction::Bi => "bi",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<VertexId>,
}

impl Csr {
    /// `pairs` must be sorted and deduplicated.
    fn from_sorted_pairs(n: usize, pairs: &[(VertexId, VertexId)]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(s, _) in pairs {
            offsets[s as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.iter().map(|&(_, t)| t).collect();
        Csr { offsets, targets }
    }

    fn from_rows(rows: impl Iterator<Item = Vec<VertexId>>) -> Self {
        let mut offsets = vec![0usize];
        let mut targets = Vec::new();
        for row in rows {
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        Csr { offsets, targets }
    }

    #[inline]
    fn row(&self, v: VertexId) -> &[VertexId] {
        let v = v as usize;
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Counts of input edges that were dropped while building a graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub self_loops: usize,
    pub duplicates: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    directed: bool,
    names: Vec<String>,
    index: HashMap<String, VertexId>,
    /// Γ_out for directed graphs, Γ for undirected ones.
    out: Csr,
    /// Only present for directed graphs.
    inbound: Option<Csr>,
    union: Option<Csr>,
    bi: Option<Csr>,
    edge_count: usize,
    labels: Option<Vec<Label>>,
}

/// Total order on vertex names: numeric names first in numeric order, then
/// everything else lexicographically.
pub fn name_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Builds a graph from named edge pairs. Self-loops and duplicates are
/// dropped and counted in the returned report.
pub fn build_graph<I, S>(edge_list: I, directed: bool) -> Result<(Graph, BuildReport)>
where
    I: IntoIterator<Item = (S, S)>,
    S: AsRef<str>,
{
    let mut index: HashMap<String, VertexId> = HashMap::new();
    let mut names = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |name: &str| -> VertexId {
        if let Some(&id) = index.get(name) {
            return id;
        }
        let id = names.len() as VertexId;
        names.push(name.to_string());
        index.insert(name.to_string(), id);
        id
    };
    for (a, b) in edge_list {
        let a = intern(a.as_ref());
        let b = intern(b.as_ref());
        edges.push((a, b));
    }
    if edges.is_empty() {
        return Err(Error::Parameter("edge list is empty".into()));
    }
    Graph::from_parts(names, edges, directed, None)
}

impl Graph {
    /// Builds a graph over `names` from id-based edges. Ids are remapped into
    /// canonical name order, so the returned graph's ids need not match the
    /// input ids; use [`Graph::vertex_id`] to translate.
    pub fn from_parts(
        names: Vec<String>,
        edges: Vec<(VertexId, VertexId)>,
        directed: bool,
        labels: Option<Vec<Label>>,
    ) -> Result<(Graph, BuildReport)> {
        let n = names.len();
        if n == 0 {
            return Err(Error::Parameter("graph has no vertices".into()));
        }
        if n > VertexId::MAX as usize {
            return Err(Error::Parameter(format!("too many vertices: {n}")));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Shape { expected: n, got: l.len() });
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| name_order(&names[a], &names[b]));
        let mut remap = vec![0 as VertexId; n];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new as VertexId;
        }
        let mut names_sorted = Vec::with_capacity(n);
        let mut index = HashMap::with_capacity(n);
        for (new, &old) in order.iter().enumerate() {
            if index.insert(names[old].clone(), new as VertexId).is_some() {
                return Err(Error::Parameter(format!("duplicate vertex name `{}`", names[old])));
            }
            names_sorted.push(names[old].clone());
        }
        let labels = labels.map(|l| order.iter().map(|&old| l[old]).collect());

        let mut report = BuildReport::default();
        let input_len = edges.len();
        let mut canon: Vec<(VertexId, VertexId)> = Vec::with_capacity(input_len);
        for (a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::UnknownVertex(format!("{}", a.max(b))));
            }
            let (a, b) = (remap[a as usize], remap[b as usize]);
            if a == b {
                report.self_loops += 1;
                continue;
            }
            canon.push(if directed { (a, b) } else { (a.min(b), a.max(b)) });
        }
        canon.sort_unstable();
        canon.dedup();
        report.duplicates = input_len - report.self_loops - canon.len();
        let edge_count = canon.len();

        let graph = if directed {
            let out = Csr::from_sorted_pairs(n, &canon);
            let mut rev: Vec<_> = canon.iter().map(|&(a, b)| (b, a)).collect();
            rev.sort_unstable();
            let inbound = Csr::from_sorted_pairs(n, &rev);
            let union = Csr::from_rows((0..n as VertexId).map(|v| {
                let mut row = Vec::new();
                merge_union(out.row(v), inbound.row(v), &mut row);
                row
            }));
            let bi = Csr::from_rows((0..n as VertexId).map(|v| {
                let mut row = Vec::new();
                merge_intersection(out.row(v), inbound.row(v), &mut row);
                row
            }));
            Graph {
                directed,
                names: names_sorted,
                index,
                out,
                inbound: Some(inbound),
                union: Some(union),
                bi: Some(bi),
                edge_count,
                labels,
            }
        } else {
            let mut sym: Vec<_> = canon.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
            sym.sort_unstable();
            Graph {
                directed,
                names: names_sorted,
                index,
                out: Csr::from_sorted_pairs(n, &sym),
                inbound: None,
                union: None,
                bi: None,
                edge_count,
                labels,
            }
        };
        Ok((graph, report))
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        0..self.names.len() as VertexId
    }

    pub fn name(&self, v: VertexId) -> &str {
        &self.names[v as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vertex_id(&self, name: &str) -> Result<VertexId> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVertex(name.to_string()))
    }

    pub fn contains(&self, v: VertexId) -> bool {
        (v as usize) < self.names.len()
    }

    /// Checked neighbourhood lookup.
    pub fn neighbors(&self, v: VertexId, mode: Direction) -> Result<&[VertexId]> {
        if !self.contains(v) {
            return Err(Error::UnknownVertex(v.to_string()));
        }
        Ok(self.adj(v, mode))
    }

    /// Sorted neighbourhood of `v`. Panics if `v` is out of range.
    #[inline]
    pub fn adj(&self, v: VertexId, mode: Direction) -> &[VertexId] {
        match (self.directed, mode) {
            (false, _) | (true, Direction::Out) => self.out.row(v),
            (true, Direction::In) => self.inbound.as_ref().expect("directed").row(v),
            (true, Direction::All) => self.union.as_ref().expect("directed").row(v),
            (true, Direction::Bi) => self.bi.as_ref().expect("directed").row(v),
        }
    }

    /// |Γ(v)|.
    #[inline]
    pub fn degree(&self, v: VertexId) -> usize {
        self.adj(v, Direction::All).len()
    }

    #[inline]
    pub fn has_edge(&self, v: VertexId, u: VertexId) -> bool {
        self.out.row(v).binary_search(&u).is_ok()
    }

    /// Every edge once: directed edges as stored, undirected ones as `(v, u)`
    /// with `v < u`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        let directed = self.directed;
        self.vertices().flat_map(move |v| {
            self.out.row(v).iter().copied().filter(move |&u| directed || v < u).map(move |u| (v, u))
        })
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn label(&self, v: VertexId) -> Option<Label> {
        self.labels.as_ref().map(|l| l[v as usize])
    }

    /// Attaches labels by vertex name; vertices not in `labels` are normal.
    /// Names not present in the graph are ignored.
    pub fn with_named_labels(mut self, labels: &HashMap<String, Label>) -> Self {
        let l = self
            .names
            .iter()
            .map(|name| labels.get(name).copied().unwrap_or(Label::Normal))
            .collect();
        self.labels = Some(l);
        self
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// The degree used as the empirical degree distribution: out-degree for
    /// directed graphs, |Γ| otherwise.
    pub fn distribution_degree(&self, v: VertexId) -> usize {
        self.out.row(v).len()
    }

    pub fn mean_distribution_degree(&self) -> f64 {
        self.out.targets.len() as f64 / self.vertex_count() as f64
    }

    #[allow(clippy::type_complexity)]
    pub(crate) fn into_parts(self) -> (Vec<String>, Vec<(VertexId, VertexId)>, Option<Vec<Label>>) {
        let edges = self.edges().collect();
        (self.names, edges, self.labels)
    }
}

/// Draws a degree from the empirical degree distribution, i.e. the degree of
/// a uniformly chosen vertex.
pub fn sample_degree<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> usize {
    let v = rng.gen_range(0..g.vertex_count()) as VertexId;
    g.distribution_degree(v)
}

pub(crate) fn merge_union(a: &[VertexId], b: &[VertexId], out: &mut Vec<VertexId>) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

pub(crate) fn merge_intersection(a: &[VertexId], b: &[VertexId], out: &mut Vec<VertexId>) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
}

/// |a ∩ b| for sorted slices.
#[inline]
pub fn intersection_size(a: &[VertexId], b: &[VertexId]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(edges: &[(&str, &str)], directed: bool) -> Graph {
        build_graph(edges.iter().copied(), directed).unwrap().0
    }

    fn set(g: &Graph, v: &str, mode: Direction) -> Vec<String> {
        let v = g.vertex_id(v).unwrap();
        g.neighbors(v, mode).unwrap().iter().map(|&u| g.name(u).to_string()).collect()
    }

    #[test]
    fn counts_vertices_and_edges() {
        let u = g(&[("a", "b"), ("b", "c")], false);
        assert_eq!((u.vertex_count(), u.edge_count()), (3, 2));

        let d = g(&[("a", "b"), ("b", "a")], true);
        assert_eq!(d.edge_count(), 2);

        let (u, report) = build_graph([("a", "b"), ("b", "a")], false).unwrap();
        assert_eq!(u.edge_count(), 1);
        assert_eq!(report.duplicates, 1);
    }

    #[test]
    fn drops_self_loops() {
        let (g, report) = build_graph([("a", "a"), ("a", "b"), ("a", "b")], true).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(report, BuildReport { self_loops: 1, duplicates: 1 });
    }

    #[test]
    fn empty_edge_list_is_rejected() {
        let empty: Vec<(&str, &str)> = vec![];
        assert!(matches!(build_graph(empty, false), Err(Error::Parameter(_))));
    }

    #[test]
    fn directional_neighbourhoods() {
        let d = g(&[("v", "u")], true);
        assert_eq!(set(&d, "v", Direction::Out), vec!["u"]);
        assert!(set(&d, "v", Direction::In).is_empty());
        assert!(set(&d, "v", Direction::Bi).is_empty());
        assert_eq!(set(&d, "v", Direction::All), vec!["u"]);

        let d = g(&[("v", "u"), ("u", "v")], true);
        assert_eq!(set(&d, "v", Direction::Bi), vec!["u"]);

        let u = g(&[("v", "u")], false);
        for mode in [Direction::All, Direction::In, Direction::Out, Direction::Bi] {
            assert_eq!(set(&u, "v", mode), vec!["u"]);
        }
    }

    #[test]
    fn unknown_vertex_lookup() {
        let u = g(&[("v", "u")], false);
        assert!(matches!(u.neighbors(7, Direction::All), Err(Error::UnknownVertex(_))));
        assert!(matches!(u.vertex_id("zz"), Err(Error::UnknownVertex(_))));
    }

    #[test]
    fn numeric_names_keep_numeric_order() {
        let u = g(&[("10", "2"), ("2", "x"), ("1", "10")], false);
        let names: Vec<_> = u.names().to_vec();
        assert_eq!(names, vec!["1", "2", "10", "x"]);
    }

    #[test]
    fn sample_degree_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = g(&[("a", "b")], false);
        assert!((0..100).all(|_| sample_degree(&single, &mut rng) == 1));

        // 4-cycle is 2-regular
        let cyc = g(&[("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")], false);
        assert!((0..100).all(|_| sample_degree(&cyc, &mut rng) == 2));
    }

    #[test]
    fn sample_degree_star_proportions() {
        let star = g(&[("c", "a"), ("c", "b"), ("c", "d")], false);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws: Vec<usize> = (0..10_000).map(|_| sample_degree(&star, &mut rng)).collect();
        assert!(draws.iter().all(|&d| d == 1 || d == 3));
        let ones = draws.iter().filter(|&&d| d == 1).count() as f64 / 10_000.0;
        assert!((ones - 0.75).abs() <= 0.02, "fraction of leaves {ones}");
    }

    #[test]
    fn sample_degree_uses_out_degree_when_directed() {
        let d = g(&[("a", "b"), ("a", "c"), ("a", "d")], true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<usize> = (0..1000).map(|_| sample_degree(&d, &mut rng)).collect();
        assert!(draws.iter().all(|&k| k == 0 || k == 3));
    }
}
