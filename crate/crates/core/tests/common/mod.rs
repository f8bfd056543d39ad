//! Brute-force reference implementations used by the integration tests.
//! Nothing here goes through the library's adjacency or metric code.

#![allow(dead_code)]

use std::collections::BTreeSet;

use avd::graph::Graph;

/// Adjacency-matrix graph on vertices `0..n`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub directed: bool,
    pub arcs: Vec<Vec<bool>>,
}

impl Dense {
    pub fn new(n: usize, directed: bool, edges: &[(usize, usize)]) -> Self {
        let mut arcs = vec![vec![false; n]; n];
        for &(a, b) in edges {
            if a != b {
                arcs[a][b] = true;
                if !directed {
                    arcs[b][a] = true;
                }
            }
        }
        Dense { n, directed, arcs }
    }

    /// Builds the library graph with names "0".."n-1" so ids equal indices.
    pub fn to_graph(&self) -> Graph {
        let names = (0..self.n).map(|i| i.to_string()).collect();
        let mut edges = Vec::new();
        for a in 0..self.n {
            for b in 0..self.n {
                if self.arcs[a][b] && (self.directed || a < b) {
                    edges.push((a as u32, b as u32));
                }
            }
        }
        Graph::from_parts(names, edges, self.directed, None).unwrap().0
    }

    pub fn out_set(&self, v: usize) -> BTreeSet<usize> {
        (0..self.n).filter(|&u| self.arcs[v][u]).collect()
    }

    pub fn in_set(&self, v: usize) -> BTreeSet<usize> {
        (0..self.n).filter(|&u| self.arcs[u][v]).collect()
    }

    pub fn all_set(&self, v: usize) -> BTreeSet<usize> {
        self.out_set(v).union(&self.in_set(v)).copied().collect()
    }

    pub fn bi_set(&self, v: usize) -> BTreeSet<usize> {
        self.out_set(v).intersection(&self.in_set(v)).copied().collect()
    }

    /// Feature vector in the library's column order.
    pub fn features(&self, v: usize, u: usize) -> Vec<f64> {
        let (av, au) = (self.all_set(v), self.all_set(u));
        let common = av.intersection(&au).count();
        let total = av.union(&au).count();
        let jac = if total == 0 { 0.0 } else { common as f64 / total as f64 };
        let pa = (av.len() * au.len()) as f64;
        let w = |k: usize| 1.0 / ((1 + k) as f64).sqrt();
        if self.directed {
            let inter = |a: BTreeSet<usize>, b: BTreeSet<usize>| a.intersection(&b).count() as f64;
            let (iv, iu, ov, ou) = (
                w(self.in_set(v).len()),
                w(self.in_set(u).len()),
                w(self.out_set(v).len()),
                w(self.out_set(u).len()),
            );
            vec![
                total as f64,
                inter(self.in_set(v), self.in_set(u)),
                inter(self.out_set(v), self.out_set(u)),
                inter(self.bi_set(v), self.bi_set(u)),
                jac,
                pa,
                inter(self.out_set(v), self.in_set(u)),
                if self.arcs[u][v] { 1.0 } else { 0.0 },
                iv + iu,
                iv + ou,
                ov + iu,
                ov + ou,
                iv * iu,
                iv * ou,
                ov * iu,
                ov * ou,
            ]
        } else {
            let aa: f64 = av
                .intersection(&au)
                .map(|&x| self.all_set(x).len())
                .filter(|&d| d > 1)
                .map(|d| 1.0 / (d as f64).ln())
                .sum();
            let (wv, wu) = (w(av.len()), w(au.len()));
            vec![total as f64, common as f64, jac, pa, aa, wv + wu, wv * wu]
        }
    }
}

/// Every graph on `n` labelled vertices, undirected or directed.
pub fn all_graphs(n: usize, directed: bool) -> impl Iterator<Item = Dense> {
    let slots: Vec<(usize, usize)> = if directed {
        (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect()
    } else {
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
    };
    let count = 1u64 << slots.len();
    (0..count).map(move |mask| {
        let edges: Vec<(usize, usize)> =
            slots.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect();
        Dense::new(n, directed, &edges)
    })
}

/// Number of (graph, ordered pair) cases whose feature vector differs from
/// the brute-force one, plus the number of cases checked.
pub fn feature_mismatches<I: IntoIterator<Item = Dense>>(graphs: I) -> (usize, usize) {
    let (mut bad, mut checked) = (0, 0);
    for d in graphs {
        let g = d.to_graph();
        for v in 0..d.n {
            for u in 0..d.n {
                if v == u {
                    continue;
                }
                checked += 1;
                let got = avd::features::extract_edge_features(&g, v as u32, u as u32).unwrap();
                if got.values() != d.features(v, u).as_slice() {
                    bad += 1;
                }
            }
        }
    }
    (bad, checked)
}

/// Fraction of correctly ordered (positive, negative) pairs, ties counting
/// one half.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// The seven meta-features in their canonical order, computed naively.
pub fn naive_meta(ep: &[f64], threshold: f64) -> [f64; 7] {
    let n = ep.len() as f64;
    let mean = ep.iter().sum::<f64>() / n;
    let var = ep.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    let labels: Vec<f64> = ep.iter().map(|&p| if p >= threshold { 1.0 } else { 0.0 }).collect();
    let label_sum: f64 = labels.iter().sum();
    let label_mean = label_sum / n;
    let label_var = labels.iter().map(|l| (l - label_mean) * (l - label_mean)).sum::<f64>() / n;
    let mut s = ep.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = s.len();
    let median = if m % 2 == 1 { s[m / 2] } else { 0.5 * (s[m / 2 - 1] + s[m / 2]) };
    [mean, var.sqrt(), label_sum, label_mean, label_var.sqrt(), median, n]
}
