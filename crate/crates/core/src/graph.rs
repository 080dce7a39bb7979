//! Immutable graphs, normalized adjacency and block-diagonal batching.
//!
//! A [`Graph`] stores its undirected structure as a symmetric CSR without
//! self-loops. Self-loops only appear in [`NormAdjacency`], which carries the
//! GCN coefficients `1 / sqrt((deg_i + 1)(deg_j + 1))` for every stored edge
//! plus one self-loop per node.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};

use crate::error::{GffError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    features: Array2<f64>,
    label: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Edges are symmetrized and
    /// deduplicated; self-loops are dropped.
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        label: usize,
    ) -> Result<Self> {
        if features.nrows() != n {
            return Err(GffError::Shape(format!(
                "feature matrix has {} rows, graph has {n} nodes",
                features.nrows()
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GffError::Structural(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            row_ptr,
            col_idx,
            features,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Stored directed entries; twice the undirected edge count.
    pub fn num_entries(&self) -> usize {
        self.col_idx.len()
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes())
            .map(|i| self.degree(i))
            .max()
            .unwrap_or(0)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_width(&self) -> usize {
        self.features.ncols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// Undirected edges as `(i, j)` with `i < j`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| i < j)
                .map(move |j| (i, j))
        })
    }

    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes() {
            return Err(GffError::Shape(format!(
                "feature matrix has {} rows, graph has {} nodes",
                features.nrows(),
                self.num_nodes()
            )));
        }
        Ok(Self {
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            features,
            label: self.label,
        })
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(GffError::Shape(format!(
                "permutation of length {} for {n} nodes",
                perm.len()
            )));
        }
        let edges: Vec<(usize, usize)> = self.edges().map(|(i, j)| (perm[i], perm[j])).collect();
        let mut features = Array2::zeros(self.features.raw_dim());
        for (v, &p) in perm.iter().enumerate() {
            features.row_mut(p).assign(&self.features.row(v));
        }
        Graph::new(n, &edges, features, self.label)
    }

    pub fn normalized(&self) -> NormAdjacency {
        normalize_adjacency(self)
    }
}

/// Sparse propagation matrix `S` with `S[i][j] = 1 / c_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdjacency {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    coef: Vec<f64>,
}

impl NormAdjacency {
    /// Builds from per-row `(col, coef)` lists. Rows are sorted by column.
    pub(crate) fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut coef = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, c) in row {
                col_idx.push(j);
                coef.push(c);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            row_ptr,
            col_idx,
            coef,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.coef[r].iter().copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_nodes()).flat_map(move |i| self.row(i).map(move |(j, c)| (i, j, c)))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.coef[r.start + k])
    }

    /// Keeps only the entries for which `keep(i, j)` holds.
    pub fn filter(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let rows = (0..self.num_nodes())
            .map(|i| self.row(i).filter(|&(j, _)| keep(i, j)).collect())
            .collect();
        Self::from_rows(rows)
    }

    /// `S · X`.
    pub fn propagate(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_rows(x.nrows())?;
        let d = x.ncols();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = Array2::<f64>::zeros((self.num_nodes(), d));
        let os = out.as_slice_mut().expect("standard layout");
        for i in 0..self.num_nodes() {
            let dst = &mut os[i * d..(i + 1) * d];
            for (j, c) in self.row(i) {
                let src = &xs[j * d..(j + 1) * d];
                for (o, v) in dst.iter_mut().zip(src) {
                    *o += c * v;
                }
            }
        }
        Ok(out)
    }

    /// `Sᵀ · X`.
    pub fn propagate_transpose(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_rows(x.nrows())?;
        let d = x.ncols();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = Array2::<f64>::zeros((self.num_nodes(), d));
        let os = out.as_slice_mut().expect("standard layout");
        for i in 0..self.num_nodes() {
            let src = &xs[i * d..(i + 1) * d];
            for (j, c) in self.row(i) {
                let dst = &mut os[j * d..(j + 1) * d];
                for (o, v) in dst.iter_mut().zip(src) {
                    *o += c * v;
                }
            }
        }
        Ok(out)
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.num_nodes() {
            return Err(GffError::Shape(format!(
                "matrix has {rows} rows, adjacency has {} nodes",
                self.num_nodes()
            )));
        }
        Ok(())
    }

    /// Block-diagonal concatenation; coefficients are copied unchanged.
    pub fn block_diag<'a>(blocks: impl IntoIterator<Item = &'a NormAdjacency>) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut coef = Vec::new();
        let mut offset = 0;
        for b in blocks {
            for i in 0..b.num_nodes() {
                for (j, c) in b.row(i) {
                    col_idx.push(j + offset);
                    coef.push(c);
                }
                row_ptr.push(col_idx.len());
            }
            offset += b.num_nodes();
        }
        Self {
            row_ptr,
            col_idx,
            coef,
        }
    }
}

pub fn normalize_adjacency(g: &Graph) -> NormAdjacency {
    let n = g.num_nodes();
    // One square root per entry keeps coefficients like 1/sqrt(4) exact.
    let coef = |i: usize, j: usize| 1.0 / (((g.degree(i) + 1) * (g.degree(j) + 1)) as f64).sqrt();
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> =
                g.neighbors(i).iter().map(|&j| (j, coef(i, j))).collect();
            row.push((i, coef(i, i)));
            row
        })
        .collect();
    NormAdjacency::from_rows(rows)
}

/// `n × (max_degree + 1)` one-hot degree matrix.
pub fn degree_one_hot(g: &Graph, max_degree: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((g.num_nodes(), max_degree + 1));
    for i in 0..g.num_nodes() {
        let d = g.degree(i);
        if d > max_degree {
            return Err(GffError::Capacity(format!(
                "node {i} has degree {d}, one-hot cap is {max_degree}"
            )));
        }
        out[[i, d]] = 1.0;
    }
    Ok(out)
}

/// Several graphs assembled into one block-diagonal graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub adj: NormAdjacency,
    pub features: Array2<f64>,
    /// Node index to graph index; non-decreasing.
    pub indicator: Vec<usize>,
    pub labels: Vec<usize>,
    offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn num_graphs(&self) -> usize {
        self.labels.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.indicator.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn segment(&self, g: usize) -> Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }
}

pub fn batch(graphs: &[&Graph]) -> Result<GraphBatch> {
    let width = graphs.first().map(|g| g.feature_width()).unwrap_or(0);
    if let Some(g) = graphs.iter().find(|g| g.feature_width() != width) {
        return Err(GffError::Shape(format!(
            "feature width {} differs from batch width {width}",
            g.feature_width()
        )));
    }
    let norms: Vec<NormAdjacency> = graphs.iter().map(|g| g.normalized()).collect();
    let adj = NormAdjacency::block_diag(&norms);
    let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
    let mut features = Array2::zeros((total, width));
    let mut indicator = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(graphs.len() + 1);
    offsets.push(0);
    let mut at = 0;
    for (k, g) in graphs.iter().enumerate() {
        let n = g.num_nodes();
        features.slice_mut(s![at..at + n, ..]).assign(g.features());
        indicator.extend(std::iter::repeat_n(k, n));
        at += n;
        offsets.push(at);
    }
    Ok(GraphBatch {
        adj,
        features,
        indicator,
        labels: graphs.iter().map(|g| g.label()).collect(),
        offsets,
    })
}

/// Per-segment column sums: row `g` is `Σ_{j ∈ segment g} x_j`.
pub fn segment_sum(x: ArrayView2<'_, f64>, offsets: &[usize]) -> Array2<f64> {
    let b = offsets.len() - 1;
    let mut out = Array2::zeros((b, x.ncols()));
    for g in 0..b {
        for j in offsets[g]..offsets[g + 1] {
            let mut row = out.row_mut(g);
            row += &x.row(j);
        }
    }
    out
}

pub fn segment_mean(x: ArrayView2<'_, f64>, offsets: &[usize]) -> Array2<f64> {
    let mut out = segment_sum(x, offsets);
    for (g, mut row) in out.rows_mut().into_iter().enumerate() {
        let n = offsets[g + 1] - offsets[g];
        if n > 0 {
            row /= n as f64;
        }
    }
    out
}
