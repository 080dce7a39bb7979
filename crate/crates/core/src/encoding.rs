//! Positive and negative samples: a graph with a class label embedded
//! either in every node's features or in one extra virtual node.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{GffError, Result};
use crate::graph::{Graph, NormAdjacency};
use crate::layers::{MessageGraph, Relation, RelationalAdjacency};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingMode {
    /// One-hot label appended to each node's feature row.
    Concat,
    /// One extra node carrying the label, linked to every node.
    Virtual,
}

impl EncodingMode {
    /// Input width of the first layer for raw feature width `f`.
    pub fn input_width(self, f: usize, num_classes: usize) -> usize {
        match self {
            EncodingMode::Concat => f + num_classes,
            EncodingMode::Virtual => f,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncodedGraph {
    pub graph: Graph,
    pub encoded_label: usize,
    pub is_positive: bool,
    /// Tag of each stored CSR entry of `graph` (virtual mode only).
    pub relation_tags: Option<Vec<Relation>>,
}

impl EncodedGraph {
    pub fn mode(&self) -> EncodingMode {
        if self.relation_tags.is_some() {
            EncodingMode::Virtual
        } else {
            EncodingMode::Concat
        }
    }

    pub fn message_graph(&self) -> MessageGraph {
        match self.mode() {
            EncodingMode::Concat => MessageGraph::Plain(self.graph.normalized()),
            EncodingMode::Virtual => {
                let v = self.graph.num_nodes() - 1;
                MessageGraph::Relational(relational_split(&self.graph.normalized(), v))
            }
        }
    }
}

fn check_label(label: usize, num_classes: usize) -> Result<()> {
    if label >= num_classes {
        return Err(GffError::Domain(format!(
            "label {label} outside [0, {num_classes})"
        )));
    }
    Ok(())
}

pub fn encode_concat(g: &Graph, label: usize, num_classes: usize) -> Result<EncodedGraph> {
    check_label(label, num_classes)?;
    let (n, f) = g.features().dim();
    let mut x = Array2::zeros((n, f + num_classes));
    x.slice_mut(s![.., ..f]).assign(g.features());
    x.column_mut(f + label).fill(1.0);
    Ok(EncodedGraph {
        graph: g.with_features(x)?,
        encoded_label: label,
        is_positive: label == g.label(),
        relation_tags: None,
    })
}

/// Virtual-node feature row: one-hot label zero-padded to width `f`.
fn label_embedding(label: usize, num_classes: usize, f: usize) -> Result<Vec<f64>> {
    if num_classes > f {
        return Err(GffError::Domain(format!(
            "{num_classes} classes do not fit a virtual-node embedding of width {f}"
        )));
    }
    let mut row = vec![0.0; f];
    row[label] = 1.0;
    Ok(row)
}

pub fn encode_virtual(g: &Graph, label: usize, num_classes: usize) -> Result<EncodedGraph> {
    check_label(label, num_classes)?;
    let (n, f) = g.features().dim();
    let emb = label_embedding(label, num_classes, f)?;
    let mut x = Array2::zeros((n + 1, f));
    x.slice_mut(s![..n, ..]).assign(g.features());
    for (k, v) in emb.into_iter().enumerate() {
        x[[n, k]] = v;
    }
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    edges.extend((0..n).map(|v| (v, n)));
    let graph = Graph::new(n + 1, &edges, x, g.label())?;
    let tags = (0..=n)
        .flat_map(|i| {
            graph.neighbors(i).iter().map(move |&j| {
                if i == n {
                    Relation::ToVirtual
                } else if j == n {
                    Relation::FromVirtual
                } else {
                    Relation::Regular
                }
            })
        })
        .collect();
    Ok(EncodedGraph {
        graph,
        encoded_label: label,
        is_positive: label == g.label(),
        relation_tags: Some(tags),
    })
}

/// Splits a normalized adjacency whose last node is virtual. Row `i`
/// receives messages from column `j`; the virtual node has no self-loop.
fn relational_split(adj: &NormAdjacency, virtual_node: usize) -> RelationalAdjacency {
    let v = virtual_node;
    RelationalAdjacency::new([
        adj.filter(|i, j| i != v && j != v),
        adj.filter(|i, j| i == v && j != v),
        adj.filter(|i, j| j == v && i != v),
    ])
}

/// Uniform over the `C - 1` wrong labels.
pub fn sample_negative_label(
    true_label: usize,
    num_classes: usize,
    rng: &mut SplitMix64,
) -> Result<usize> {
    if num_classes < 2 {
        return Err(GffError::Domain(format!(
            "negative labels need at least 2 classes, got {num_classes}"
        )));
    }
    check_label(true_label, num_classes)?;
    let k = rng.below(num_classes as u64 - 1) as usize;
    Ok(if k >= true_label { k + 1 } else { k })
}

/// A mini-batch of graphs sharing one encoded structure. Positive,
/// negative and candidate-label samples differ only in [`features_for`].
///
/// [`features_for`]: EncodedBatch::features_for
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub mode: EncodingMode,
    pub message: MessageGraph,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    base: Array2<f64>,
    offsets: Vec<usize>,
}

impl EncodedBatch {
    pub fn new(graphs: &[&Graph], mode: EncodingMode, num_classes: usize) -> Result<Self> {
        let f = graphs.first().map(|g| g.feature_width()).unwrap_or(0);
        if let Some(g) = graphs.iter().find(|g| g.feature_width() != f) {
            return Err(GffError::Shape(format!(
                "feature width {} differs from batch width {f}",
                g.feature_width()
            )));
        }
        if mode == EncodingMode::Virtual {
            label_embedding(0, num_classes, f)?;
        }
        let extra = usize::from(mode == EncodingMode::Virtual);
        let mut offsets = vec![0];
        for g in graphs {
            offsets.push(offsets.last().unwrap() + g.num_nodes() + extra);
        }
        let total = *offsets.last().unwrap();
        let mut base = Array2::zeros((total, mode.input_width(f, num_classes)));
        for (k, g) in graphs.iter().enumerate() {
            let at = offsets[k];
            base.slice_mut(s![at..at + g.num_nodes(), ..f])
                .assign(g.features());
        }
        let message = match mode {
            EncodingMode::Concat => {
                let norms: Vec<NormAdjacency> = graphs.iter().map(|g| g.normalized()).collect();
                MessageGraph::Plain(NormAdjacency::block_diag(&norms))
            }
            EncodingMode::Virtual => {
                let parts: Vec<RelationalAdjacency> = graphs
                    .iter()
                    .map(|g| {
                        let enc = encode_virtual(g, 0, num_classes)?;
                        Ok(relational_split(&enc.graph.normalized(), g.num_nodes()))
                    })
                    .collect::<Result<_>>()?;
                MessageGraph::Relational(RelationalAdjacency::block_diag(&parts))
            }
        };
        Ok(Self {
            mode,
            message,
            labels: graphs.iter().map(|g| g.label()).collect(),
            num_classes,
            base,
            offsets,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.labels.len()
    }

    pub fn num_rows(&self) -> usize {
        self.base.nrows()
    }

    /// Row ranges per graph; in virtual mode the last row is the virtual node.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Feature matrix with graph `k` encoded under `labels[k]`.
    pub fn features_for(&self, labels: &[usize]) -> Result<Array2<f64>> {
        if labels.len() != self.num_graphs() {
            return Err(GffError::Shape(format!(
                "{} labels for {} graphs",
                labels.len(),
                self.num_graphs()
            )));
        }
        let mut x = self.base.clone();
        let width = x.ncols();
        for (k, &label) in labels.iter().enumerate() {
            check_label(label, self.num_classes)?;
            match self.mode {
                EncodingMode::Concat => {
                    let f = width - self.num_classes;
                    for r in self.offsets[k]..self.offsets[k + 1] {
                        x[[r, f + label]] = 1.0;
                    }
                }
                EncodingMode::Virtual => {
                    x[[self.offsets[k + 1] - 1, label]] = 1.0;
                }
            }
        }
        Ok(x)
    }
}
