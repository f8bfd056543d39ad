//! File formats: edge lists, label files, profile and audit CSVs, and the
//! serialised link model.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anomaly::{MetaFeature, VertexAnomalyProfile};
use crate::error::{Error, Result};
use crate::features::feature_names;
use crate::forest::LinkForest;
use crate::graph::{build_graph, BuildReport, Graph, Label, VertexId};
use crate::sampling::{InjectionRecord, TestSet};

pub const MODEL_FORMAT: &str = "avd-link-forest";
pub const MODEL_VERSION: u32 = 1;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Runs `f` against a buffered writer on `path` and flushes it.
pub fn write_file<F>(path: impl AsRef<Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let path = path.as_ref();
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(Error::Parse { line: i + 1, message: e.to_string() })),
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
    })
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

/// One edge per line, two vertex names separated by a comma or whitespace.
pub fn parse_edge_list<R: BufRead>(reader: R, directed: bool) -> Result<(Graph, BuildReport)> {
    let mut pairs = Vec::new();
    for item in content_lines(reader) {
        let (n, line) = item?;
        let parts: Vec<&str> = fields(&line).collect();
        if parts.len() != 2 {
            return Err(Error::Parse {
                line: n,
                message: format!("expected two vertex names, found {} field(s)", parts.len()),
            });
        }
        pairs.push((parts[0].to_string(), parts[1].to_string()));
    }
    build_graph(pairs, directed)
}

pub fn load_edge_list(path: impl AsRef<Path>, directed: bool) -> Result<(Graph, BuildReport)> {
    let path = path.as_ref();
    parse_edge_list(open(path)?, directed).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

/// Writes every edge once as `source,target`. Isolated vertices are not
/// representable in this format.
pub fn write_edge_list<W: Write + ?Sized>(g: &Graph, w: &mut W) -> std::io::Result<()> {
    for (a, b) in g.edges() {
        writeln!(w, "{},{}", g.name(a), g.name(b))?;
    }
    Ok(())
}

/// CSV with header `vertex,label`; labels are `0`/`1` or `normal`/`anomalous`.
pub fn parse_labels<R: BufRead>(reader: R) -> Result<HashMap<String, Label>> {
    let mut out = HashMap::new();
    let mut header_seen = false;
    for item in content_lines(reader) {
        let (n, line) = item?;
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen {
            if parts != ["vertex", "label"] {
                return Err(Error::Parse { line: n, message: "expected header `vertex,label`".into() });
            }
            header_seen = true;
            continue;
        }
        if parts.len() != 2 || parts[0].is_empty() {
            return Err(Error::Parse { line: n, message: format!("expected `vertex,label`, got `{line}`") });
        }
        let label = parts[1].parse().map_err(|message| Error::Parse { line: n, message })?;
        out.insert(parts[0].to_string(), label);
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<HashMap<String, Label>> {
    parse_labels(open(path.as_ref())?)
}

pub fn write_labels<W: Write + ?Sized>(g: &Graph, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "vertex,label")?;
    for v in g.vertices() {
        writeln!(w, "{},{}", g.name(v), g.label(v).unwrap_or(Label::Normal))?;
    }
    Ok(())
}

/// Vertex names, one per line. Only the first comma-separated field counts,
/// so label and test-set CSVs can be used directly; a `vertex` header is
/// skipped.
pub fn parse_vertex_list<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, item) in content_lines(reader).enumerate() {
        let (_, line) = item?;
        let name = line.split(',').next().unwrap_or("").trim();
        if i == 0 && name == "vertex" {
            continue;
        }
        out.push(name.to_string());
    }
    Ok(out)
}

pub fn load_vertex_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    parse_vertex_list(open(path.as_ref())?)
}

pub fn profile_header() -> String {
    let mut h = String::from("vertex");
    for f in MetaFeature::ALL {
        h.push(',');
        h.push_str(f.name());
    }
    h
}

pub fn write_profiles<W: Write + ?Sized>(g: &Graph, profiles: &[VertexAnomalyProfile], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{}", profile_header())?;
    for p in profiles {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            g.name(p.vertex),
            p.abnormality_probability,
            p.edges_probability_stdv,
            p.sum_edge_label,
            p.mean_predicted_link_label,
            p.predicted_label_stdv,
            p.edges_probability_median,
            p.edge_count
        )?;
    }
    Ok(())
}

/// Reads a profile CSV. Returned profiles carry their row index as vertex id;
/// the names vector maps it back.
pub fn parse_profiles<R: BufRead>(reader: R) -> Result<(Vec<String>, Vec<VertexAnomalyProfile>)> {
    let mut names = Vec::new();
    let mut profiles = Vec::new();
    let mut header_seen = false;
    for item in content_lines(reader) {
        let (n, line) = item?;
        if !header_seen {
            if line != profile_header() {
                return Err(Error::Parse { line: n, message: format!("expected header `{}`", profile_header()) });
            }
            header_seen = true;
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::Parse { line: n, message: format!("expected 8 fields, got {}", parts.len()) });
        }
        let real = |i: usize| -> Result<f64> {
            parts[i].parse().map_err(|_| Error::Parse { line: n, message: format!("bad number `{}`", parts[i]) })
        };
        let count = |i: usize| -> Result<usize> {
            parts[i].parse().map_err(|_| Error::Parse { line: n, message: format!("bad count `{}`", parts[i]) })
        };
        profiles.push(VertexAnomalyProfile {
            vertex: names.len() as VertexId,
            abnormality_probability: real(1)?,
            edges_probability_stdv: real(2)?,
            sum_edge_label: count(3)?,
            mean_predicted_link_label: real(4)?,
            predicted_label_stdv: real(5)?,
            edges_probability_median: real(6)?,
            edge_count: count(7)?,
        });
        names.push(parts[0].to_string());
    }
    Ok((names, profiles))
}

pub fn write_injection_record<W: Write + ?Sized>(g: &Graph, rec: &InjectionRecord, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "vertex,degree,targets")?;
    for ((&v, &k), targets) in rec.injected.iter().zip(&rec.degrees).zip(&rec.targets) {
        let t: Vec<&str> = targets.iter().map(|&t| g.name(t)).collect();
        writeln!(w, "{},{},{}", g.name(v), k, t.join(";"))?;
    }
    Ok(())
}

pub fn write_test_set<W: Write + ?Sized>(g: &Graph, ts: &TestSet, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "vertex,label,test_edges")?;
    for (&v, label) in ts.selected.iter().zip(&ts.labels) {
        let k = ts.edges.iter().filter(|&&(a, _)| a == v).count();
        let label = label.map_or_else(String::new, |l| l.to_string());
        writeln!(w, "{},{},{}", g.name(v), label, k)?;
    }
    Ok(())
}

/// A trained link classifier together with the graph mode it expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub format: String,
    pub version: u32,
    pub directed: bool,
    pub feature_names: Vec<String>,
    pub forest: LinkForest,
}

impl LinkModel {
    pub fn new(forest: LinkForest, directed: bool) -> Self {
        LinkModel {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            directed,
            feature_names: feature_names(directed).iter().map(|s| s.to_string()).collect(),
            forest,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: LinkModel = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unexpected format `{}`", model.format)));
        }
        if model.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported version {}", model.version)));
        }
        let expected = feature_names(model.directed);
        if model.feature_names.iter().map(String::as_str).ne(expected.iter().copied())
            || model.forest.feature_count() != expected.len()
        {
            return Err(Error::Format("feature layout does not match the graph mode".into()));
        }
        model.forest.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, |w| w.write_all(self.to_json().as_bytes()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
