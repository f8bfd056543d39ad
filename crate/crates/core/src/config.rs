//! Experiment configuration in a plain `key = value` text format.
//!
//! ```text
//! # fully simulated network
//! generator.n = 30000
//! generator.m = 6
//! master_seed = 1
//! run_count = 3
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional
//! and falls back to the default shown by [`ExperimentConfig::to_pairs`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::anomaly::{MetaFeature, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::graph::Direction;

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSource {
    File { path: PathBuf, labels: Option<PathBuf> },
    Generate { n: usize, m: usize },
}

/// Which vertices the link training set must avoid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exclusion {
    /// Every endpoint of a test edge.
    Endpoints,
    /// Only the sampled test vertices.
    Selected,
}

impl std::fmt::Display for Exclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Exclusion::Endpoints => "endpoints",
            Exclusion::Selected => "selected",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: GraphSource,
    pub directed: bool,
    pub master_seed: u64,
    pub inject: bool,
    /// Share of the final graph made up of injected vertices.
    pub anomaly_fraction: f64,
    /// Label the sampled test vertices at random instead of by ground truth.
    pub random_labels: bool,
    pub test_positive_count: usize,
    pub test_negative_count: usize,
    pub min_friends: usize,
    pub threshold: f64,
    pub link_train_size_per_class: usize,
    pub link_holdout_per_class: usize,
    pub link_exclusion: Exclusion,
    pub link_forest: ForestParams,
    pub meta_forest: ForestParams,
    pub run_count: usize,
    pub folds: usize,
    pub direction_mode: Direction,
    pub info_gain_bins: usize,
    pub rank_by: MetaFeature,
    pub precision_k: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: GraphSource::Generate { n: 30_000, m: 6 },
            directed: false,
            master_seed: 0,
            inject: true,
            anomaly_fraction: 0.10,
            random_labels: false,
            test_positive_count: 100,
            test_negative_count: 900,
            min_friends: 3,
            threshold: DEFAULT_THRESHOLD,
            link_train_size_per_class: 5_000,
            link_holdout_per_class: 1_000,
            link_exclusion: Exclusion::Endpoints,
            link_forest: ForestParams::default(),
            meta_forest: ForestParams::default(),
            run_count: 10,
            folds: 10,
            direction_mode: Direction::Out,
            info_gain_bins: 10,
            rank_by: MetaFeature::AbnormalityProbability,
            precision_k: vec![10, 50, 100, 200, 500],
        }
    }
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| parse_err(line, format!("`{key}`: cannot parse `{value}`")))
}

fn flag(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(parse_err(line, format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn optional(line: usize, key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" || value == "none" {
        Ok(None)
    } else {
        num(line, key, value).map(Some)
    }
}

fn forest_key(params: &mut ForestParams, field: &str, line: usize, key: &str, value: &str) -> Result<()> {
    match field {
        "trees" => params.tree_count = num(line, key, value)?,
        "features_per_split" => params.features_per_split = optional(line, key, value)?,
        "min_leaf_size" => params.min_leaf_size = num(line, key, value)?,
        "max_depth" => params.max_depth = optional(line, key, value)?,
        _ => return Err(parse_err(line, format!("unknown key `{key}`"))),
    }
    Ok(())
}

fn show_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative graph paths are resolved against the config file
        if let GraphSource::File { path: graph, labels } = &mut cfg.source {
            let base = path.parent().unwrap_or(Path::new(""));
            if graph.is_relative() {
                *graph = base.join(&*graph);
            }
            if let Some(l) = labels.as_mut().filter(|l| l.is_relative()) {
                *l = base.join(&*l);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(i + 1, format!("expected `key = value`, got `{line}`")))?;
            cfg.set(i + 1, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides (line number 0 in errors).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) =
                o.split_once('=').ok_or_else(|| parse_err(0, format!("override `{o}` is not key=value")))?;
            self.set(0, key.trim(), value.trim())?;
        }
        self.validate()
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        match key {
            "graph" => {
                let labels = match &self.source {
                    GraphSource::File { labels, .. } => labels.clone(),
                    GraphSource::Generate { .. } => None,
                };
                self.source = GraphSource::File { path: value.into(), labels };
            }
            "labels" => match &mut self.source {
                GraphSource::File { labels, .. } => *labels = Some(value.into()),
                GraphSource::Generate { .. } => {
                    return Err(parse_err(line, "`labels` requires `graph` to be set first".into()))
                }
            },
            "generator.n" | "generator.m" => {
                let (mut n, mut m) = match self.source {
                    GraphSource::Generate { n, m } => (n, m),
                    GraphSource::File { .. } => (30_000, 6),
                };
                let v = num(line, key, value)?;
                if key == "generator.n" {
                    n = v;
                } else {
                    m = v;
                }
                self.source = GraphSource::Generate { n, m };
            }
            "directed" => self.directed = flag(line, key, value)?,
            "master_seed" => self.master_seed = num(line, key, value)?,
            "inject" => self.inject = flag(line, key, value)?,
            "anomaly_fraction" => self.anomaly_fraction = num(line, key, value)?,
            "random_labels" => self.random_labels = flag(line, key, value)?,
            "test_positive_count" => self.test_positive_count = num(line, key, value)?,
            "test_negative_count" => self.test_negative_count = num(line, key, value)?,
            "min_friends" => self.min_friends = num(line, key, value)?,
            "threshold" => self.threshold = num(line, key, value)?,
            "link_train_size_per_class" => self.link_train_size_per_class = num(line, key, value)?,
            "link_holdout_per_class" => self.link_holdout_per_class = num(line, key, value)?,
            "link_exclusion" => {
                self.link_exclusion = match value {
                    "endpoints" => Exclusion::Endpoints,
                    "selected" => Exclusion::Selected,
                    _ => return Err(parse_err(line, format!("`{key}`: expected endpoints or selected, got `{value}`"))),
                }
            }
            "run_count" => self.run_count = num(line, key, value)?,
            "folds" => self.folds = num(line, key, value)?,
            "direction_mode" => {
                self.direction_mode = match value {
                    "out" => Direction::Out,
                    "in" => Direction::In,
                    "all" => Direction::All,
                    _ => return Err(parse_err(line, format!("`{key}`: expected out, in or all, got `{value}`"))),
                }
            }
            "info_gain_bins" => self.info_gain_bins = num(line, key, value)?,
            "rank_by" => self.rank_by = value.parse().map_err(|e: Error| parse_err(line, e.to_string()))?,
            "precision_k" => {
                self.precision_k = value
                    .split(',')
                    .map(|k| num(line, key, k.trim()))
                    .collect::<Result<Vec<usize>>>()?;
            }
            _ => {
                if let Some(field) = key.strip_prefix("link_forest.") {
                    forest_key(&mut self.link_forest, field, line, key, value)?;
                } else if let Some(field) = key.strip_prefix("meta_forest.") {
                    forest_key(&mut self.meta_forest, field, line, key, value)?;
                } else {
                    return Err(parse_err(line, format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("test_positive_count", self.test_positive_count),
            ("test_negative_count", self.test_negative_count),
            ("link_train_size_per_class", self.link_train_size_per_class),
            ("run_count", self.run_count),
            ("folds", self.folds),
            ("info_gain_bins", self.info_gain_bins),
            ("link_forest.trees", self.link_forest.tree_count),
            ("meta_forest.trees", self.meta_forest.tree_count),
            ("link_forest.min_leaf_size", self.link_forest.min_leaf_size),
            ("meta_forest.min_leaf_size", self.meta_forest.min_leaf_size),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Parameter(format!("`{key}` must be positive")));
            }
        }
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 1.0) {
            return Err(Error::Parameter("`anomaly_fraction` must be in (0, 1)".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Parameter("`threshold` must be in (0, 1)".into()));
        }
        if self.precision_k.contains(&0) {
            return Err(Error::Parameter("`precision_k` entries must be positive".into()));
        }
        if let GraphSource::Generate { n, m } = self.source {
            if m == 0 || n <= m {
                return Err(Error::Parameter(format!("generator needs n > m >= 1, got n={n}, m={m}")));
            }
            if self.directed {
                return Err(Error::Parameter("the generator produces undirected graphs".into()));
            }
        }
        Ok(())
    }

    /// Fully resolved configuration, defaults included, as config-file pairs.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            out.insert(k.to_string(), v);
        };
        match &self.source {
            GraphSource::File { path, labels } => {
                put("graph", path.display().to_string());
                if let Some(l) = labels {
                    put("labels", l.display().to_string());
                }
            }
            GraphSource::Generate { n, m } => {
                put("generator.n", n.to_string());
                put("generator.m", m.to_string());
            }
        }
        put("directed", self.directed.to_string());
        put("master_seed", self.master_seed.to_string());
        put("inject", self.inject.to_string());
        put("anomaly_fraction", self.anomaly_fraction.to_string());
        put("random_labels", self.random_labels.to_string());
        put("test_positive_count", self.test_positive_count.to_string());
        put("test_negative_count", self.test_negative_count.to_string());
        put("min_friends", self.min_friends.to_string());
        put("threshold", self.threshold.to_string());
        put("link_train_size_per_class", self.link_train_size_per_class.to_string());
        put("link_holdout_per_class", self.link_holdout_per_class.to_string());
        put("link_exclusion", self.link_exclusion.to_string());
        for (prefix, p) in [("link_forest", &self.link_forest), ("meta_forest", &self.meta_forest)] {
            put(&format!("{prefix}.trees"), p.tree_count.to_string());
            put(&format!("{prefix}.features_per_split"), show_opt(p.features_per_split));
            put(&format!("{prefix}.min_leaf_size"), p.min_leaf_size.to_string());
            put(&format!("{prefix}.max_depth"), show_opt(p.max_depth));
        }
        put("run_count", self.run_count.to_string());
        put("folds", self.folds.to_string());
        put("direction_mode", self.direction_mode.to_string());
        put("info_gain_bins", self.info_gain_bins.to_string());
        put("rank_by", self.rank_by.to_string());
        put(
            "precision_k",
            self.precision_k.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
        );
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
