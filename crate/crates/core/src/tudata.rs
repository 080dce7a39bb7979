//! TUDataset directory parsing and reproducible stratified splits.
//!
//! Expected files for a dataset `NAME` in `dir`:
//!
//! | file                          | content                                   |
//! |-------------------------------|-------------------------------------------|
//! | `NAME_A.txt`                  | `i, j` per line, 1-based global node ids  |
//! | `NAME_graph_indicator.txt`    | line k: 1-based graph id of node k        |
//! | `NAME_graph_labels.txt`       | line g: integer label of graph g          |
//! | `NAME_node_labels.txt`        | optional, integer label per node          |
//! | `NAME_node_attributes.txt`    | optional, comma-separated reals per node  |
//!
//! Node features are the node attributes followed by the one-hot node label
//! (whichever of the two exist). Datasets with neither get one-hot degree
//! features whose width is fixed by the dataset-wide maximum degree.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GffError, Result};
use crate::graph::{degree_one_hot, Graph};
use crate::rng::SplitMix64;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_width: usize,
    pub source: PathBuf,
    /// Original label value for each class index.
    pub label_values: Vec<i64>,
}

struct Lines {
    file: String,
    lines: Vec<(usize, String)>,
}

impl Lines {
    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GffError::io(path, e))?;
        let lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Ok(Self {
            file: path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            lines,
        })
    }

    fn read_optional(path: &Path) -> Result<Option<Self>> {
        if path.exists() {
            Self::read(path).map(Some)
        } else {
            Ok(None)
        }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> GffError {
        GffError::Format {
            file: self.file.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn integers(&self) -> Result<Vec<i64>> {
        self.lines
            .iter()
            .map(|(k, l)| {
                l.parse::<i64>()
                    .map_err(|_| self.err(*k, format!("expected an integer, found {l:?}")))
            })
            .collect()
    }

    fn len(&self) -> usize {
        self.lines.len()
    }
}

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

pub fn parse_tu(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    let indicator_file = Lines::read(&file(dir, name, "graph_indicator"))?;
    let labels_file = Lines::read(&file(dir, name, "graph_labels"))?;
    let edges_file = Lines::read(&file(dir, name, "A"))?;
    let node_labels_file = Lines::read_optional(&file(dir, name, "node_labels"))?;
    let attrs_file = Lines::read_optional(&file(dir, name, "node_attributes"))?;

    let indicator = indicator_file.integers()?;
    let num_nodes = indicator.len();
    let raw_labels = labels_file.integers()?;
    let num_graphs = raw_labels.len();

    // Global node -> (graph, local index).
    let mut graph_of = Vec::with_capacity(num_nodes);
    let mut local_of = Vec::with_capacity(num_nodes);
    let mut sizes = vec![0usize; num_graphs];
    for (k, &gid) in indicator.iter().enumerate() {
        if gid < 1 || gid as usize > num_graphs {
            return Err(indicator_file.err(
                indicator_file.lines[k].0,
                format!("graph id {gid} outside 1..={num_graphs}"),
            ));
        }
        let g = gid as usize - 1;
        graph_of.push(g);
        local_of.push(sizes[g]);
        sizes[g] += 1;
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, text) in &edges_file.lines {
        let mut parts = text.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(edges_file.err(*line, format!("expected \"i, j\", found {text:?}")));
        };
        let parse = |s: &str| -> Result<usize> {
            let v: i64 = s
                .parse()
                .map_err(|_| edges_file.err(*line, format!("expected an integer, found {s:?}")))?;
            if v < 1 || v as usize > num_nodes {
                return Err(edges_file.err(*line, format!("node id {v} outside 1..={num_nodes}")));
            }
            Ok(v as usize - 1)
        };
        let (i, j) = (parse(a)?, parse(b)?);
        if graph_of[i] != graph_of[j] {
            return Err(edges_file.err(
                *line,
                format!(
                    "edge joins node {} (graph {}) and node {} (graph {})",
                    i + 1,
                    graph_of[i] + 1,
                    j + 1,
                    graph_of[j] + 1
                ),
            ));
        }
        edges[graph_of[i]].push((local_of[i], local_of[j]));
    }

    let mut columns: Vec<Vec<Vec<f64>>> = vec![Vec::new(); num_nodes];
    if let Some(attrs) = &attrs_file {
        if attrs.len() != num_nodes {
            return Err(attrs.err(
                attrs.len(),
                format!("{} attribute rows for {num_nodes} nodes", attrs.len()),
            ));
        }
        let mut width = None;
        for (k, (line, text)) in attrs.lines.iter().enumerate() {
            let row: Vec<f64> = text
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| attrs.err(*line, format!("expected a real, found {s:?}")))
                })
                .collect::<Result<_>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(attrs.err(*line, format!("{} attributes, expected {w}", row.len())))
                }
                _ => {}
            }
            columns[k].push(row);
        }
    }
    if let Some(labels) = &node_labels_file {
        if labels.len() != num_nodes {
            return Err(labels.err(
                labels.len(),
                format!("{} node labels for {num_nodes} nodes", labels.len()),
            ));
        }
        let values = labels.integers()?;
        let lo = values.iter().copied().min().unwrap_or(0);
        let hi = values.iter().copied().max().unwrap_or(0);
        let width = (hi - lo + 1) as usize;
        for (k, v) in values.iter().enumerate() {
            let mut row = vec![0.0; width];
            row[(v - lo) as usize] = 1.0;
            columns[k].push(row);
        }
    }

    let mut label_values = raw_labels.clone();
    label_values.sort_unstable();
    label_values.dedup();
    if label_values.len() < 2 {
        return Err(GffError::Domain(format!(
            "dataset {name} has {} distinct graph labels, need at least 2",
            label_values.len()
        )));
    }
    let class_of = |v: i64| label_values.binary_search(&v).expect("label present");

    let has_features = attrs_file.is_some() || node_labels_file.is_some();
    let width: usize = columns
        .first()
        .map(|c| c.iter().map(Vec::len).sum())
        .unwrap_or(0);

    // Gather node rows per graph in local order.
    let mut rows_per_graph: Vec<Vec<usize>> =
        sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for k in 0..num_nodes {
        rows_per_graph[graph_of[k]].push(k);
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let n = sizes[g];
        let mut features = Array2::zeros((n, if has_features { width } else { 0 }));
        if has_features {
            for (local, &k) in rows_per_graph[g].iter().enumerate() {
                let mut at = 0;
                for part in &columns[k] {
                    for (c, v) in part.iter().enumerate() {
                        features[[local, at + c]] = *v;
                    }
                    at += part.len();
                }
            }
        }
        graphs.push(Graph::new(n, &edges[g], features, class_of(raw_labels[g]))?);
    }

    let feature_width = if has_features {
        width
    } else {
        let cap = graphs.iter().map(Graph::max_degree).max().unwrap_or(0);
        graphs = graphs
            .iter()
            .map(|g| g.with_features(degree_one_hot(g, cap)?))
            .collect::<Result<_>>()?;
        cap + 1
    };

    Ok(Dataset {
        name: name.to_string(),
        graphs,
        num_classes: label_values.len(),
        feature_width,
        source: dir.to_path_buf(),
        label_values,
    })
}

impl Dataset {
    pub fn stats(&self) -> DatasetStats {
        let count = self.graphs.len().max(1) as f64;
        DatasetStats {
            name: self.name.clone(),
            num_graphs: self.graphs.len(),
            num_classes: self.num_classes,
            mean_nodes: self.graphs.iter().map(|g| g.num_nodes()).sum::<usize>() as f64 / count,
            mean_edges: self
                .graphs
                .iter()
                .map(|g| g.num_undirected_edges())
                .sum::<usize>() as f64
                / count,
            feature_width: self.feature_width,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label()] += 1;
        }
        counts
    }

    /// SHA-256 over structure, features and labels of every graph.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for g in &self.graphs {
            h.update((g.num_nodes() as u64).to_le_bytes());
            h.update((g.label() as u64).to_le_bytes());
            for (i, j) in g.edges() {
                h.update((i as u64).to_le_bytes());
                h.update((j as u64).to_le_bytes());
            }
            for v in g.features().iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes the dataset in TU layout with features as node attributes.
    pub fn write_tu(&self, dir: impl AsRef<Path>, name: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| GffError::io(dir, e))?;
        let mut a = String::new();
        let mut ind = String::new();
        let mut labels = String::new();
        let mut attrs = String::new();
        let mut base = 0;
        for (gi, g) in self.graphs.iter().enumerate() {
            for i in 0..g.num_nodes() {
                for &j in g.neighbors(i) {
                    a.push_str(&format!("{}, {}\n", base + i + 1, base + j + 1));
                }
                ind.push_str(&format!("{}\n", gi + 1));
                let row: Vec<String> = g
                    .features()
                    .row(i)
                    .iter()
                    .map(|v| format!("{v:?}"))
                    .collect();
                attrs.push_str(&row.join(", "));
                attrs.push('\n');
            }
            labels.push_str(&format!("{}\n", self.label_values[g.label()]));
            base += g.num_nodes();
        }
        for (suffix, body) in [
            ("A", a),
            ("graph_indicator", ind),
            ("graph_labels", labels),
            ("node_attributes", attrs),
        ] {
            let path = file(dir, name, suffix);
            let mut f = fs::File::create(&path).map_err(|e| GffError::io(&path, e))?;
            f.write_all(body.as_bytes())
                .map_err(|e| GffError::io(&path, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub num_graphs: usize,
    pub num_classes: usize,
    pub mean_nodes: f64,
    /// Undirected edges, each counted once.
    pub mean_edges: f64,
    pub feature_width: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} graphs, {} labels, avg nodes {:.2}, avg edges {:.2}, feature width {}",
            self.name,
            self.num_graphs,
            self.num_classes,
            self.mean_nodes,
            self.mean_edges,
            self.feature_width
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Stratified split.
///
/// Each class's indices are shuffled with [`SplitMix64`] seeded by `seed`
/// (classes visited in ascending order). Item `k` of a class of size `m`
/// gets position `(k + 0.5) / m`; all items are ordered by position, ties
/// by class, and the sequence is cut at `round(f_train·N)` and
/// `round(f_val·N)`. The rest is the test part.
pub fn split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv, fe) = fractions;
    if ![ft, fv, fe].iter().all(|f| f.is_finite() && *f > 0.0) || (ft + fv + fe - 1.0).abs() > 1e-9
    {
        return Err(GffError::Domain(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, g) in ds.graphs.iter().enumerate() {
        by_class[g.label()].push(i);
    }
    if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < 3) {
        return Err(GffError::Stratification(format!(
            "class {c} has {} graphs, need at least one per split part",
            members.len()
        )));
    }

    let mut rng = SplitMix64::new(seed);
    let mut order: Vec<(f64, usize, usize)> = Vec::with_capacity(ds.graphs.len());
    for (c, members) in by_class.iter_mut().enumerate() {
        rng.shuffle(members);
        let m = members.len() as f64;
        for (k, &idx) in members.iter().enumerate() {
            order.push(((k as f64 + 0.5) / m, c, idx));
        }
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let n = order.len();
    let n_train = (ft * n as f64).round() as usize;
    let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
    let idx: Vec<usize> = order.into_iter().map(|(_, _, i)| i).collect();
    let out = Split {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
        seed,
    };
    let mut seen = vec![false; ds.num_classes];
    for &i in &out.train {
        seen[ds.graphs[i].label()] = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(GffError::Stratification(format!(
            "class {c} absent from train part"
        )));
    }
    Ok(out)
}
