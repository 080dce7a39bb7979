//! Independent oracles for the integration tests: dense reference
//! implementations written straight from the definitions, finite
//! differences, and random instance builders.

#![allow(dead_code)]

use std::path::PathBuf;

use gff_core::goodness::{GoodnessConfig, GoodnessOrdering, GoodnessScope, Pooling};
use gff_core::{Dataset, Graph, NormAdjacency, SplitMix64};
use ndarray::Array2;

pub fn random_graph(rng: &mut SplitMix64, n: usize, f: usize, label: usize, p_edge: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.next_f64() < p_edge {
                edges.push((i, j));
            }
        }
    }
    let x = Array2::from_shape_fn((n, f), |_| rng.uniform(-1.0, 1.0));
    Graph::new(n, &edges, x, label).unwrap()
}

pub fn random_matrix(rng: &mut SplitMix64, r: usize, c: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.uniform(-scale, scale))
}

pub fn random_perm(rng: &mut SplitMix64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut p);
    p
}

/// `D^-1/2 (A + I) D^-1/2` built densely from the edge list.
pub fn dense_norm(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut a = Array2::<f64>::eye(n);
    for &(i, j) in edges {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt())
}

pub fn graph_dense_norm(g: &Graph) -> Array2<f64> {
    let edges: Vec<_> = g.edges().collect();
    dense_norm(g.num_nodes(), &edges)
}

/// Regular / to-virtual / from-virtual operators for `g` plus a virtual
/// node linked to all nodes; the virtual self-loop is dropped.
pub fn dense_virtual_relations(g: &Graph) -> [Array2<f64>; 3] {
    let n = g.num_nodes();
    let mut edges: Vec<_> = g.edges().collect();
    edges.extend((0..n).map(|i| (i, n)));
    let s = dense_norm(n + 1, &edges);
    let pick = |keep: &dyn Fn(usize, usize) -> bool| {
        Array2::from_shape_fn(
            (n + 1, n + 1),
            |(i, j)| if keep(i, j) { s[[i, j]] } else { 0.0 },
        )
    };
    [
        pick(&|i, j| i != n && j != n),
        pick(&|i, j| i == n && j != n),
        pick(&|i, j| j == n && i != n),
    ]
}

pub fn block_diag(blocks: &[Array2<f64>]) -> Array2<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Array2::zeros((n, n));
    let mut o = 0;
    for b in blocks {
        let k = b.nrows();
        out.slice_mut(ndarray::s![o..o + k, o..o + k]).assign(b);
        o += k;
    }
    out
}

pub fn to_dense(adj: &NormAdjacency) -> Array2<f64> {
    let n = adj.num_nodes();
    let mut out = Array2::zeros((n, n));
    for (i, j, c) in adj.entries() {
        out[[i, j]] += c;
    }
    out
}

pub fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn ref_normalize(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    out
}

pub fn ref_preact(s: &[Array2<f64>], x: &Array2<f64>, w: &[Array2<f64>]) -> Array2<f64> {
    let mut z = Array2::zeros((x.nrows(), w[0].ncols()));
    for (sr, wr) in s.iter().zip(w) {
        z = z + sr.dot(x).dot(wr);
    }
    z
}

/// Goodness of rows `lo..hi` straight from the definition.
pub fn ref_goodness(a: &Array2<f64>, lo: usize, hi: usize, cfg: &GoodnessConfig) -> f64 {
    let (lo, hi) = match cfg.scope {
        GoodnessScope::AllNodes => (lo, hi),
        GoodnessScope::VirtualNodeOnly => (hi - 1, hi),
    };
    let d = a.ncols();
    let n = (hi - lo) as f64;
    let pool = |vals: Vec<f64>| -> f64 {
        let s: f64 = vals.iter().sum();
        match cfg.pooling {
            Pooling::Additive => s,
            Pooling::Mean => s / n,
        }
    };
    let mut total = 0.0;
    for k in 0..d {
        total += match cfg.ordering {
            GoodnessOrdering::SquarePoolMean => pool((lo..hi).map(|j| a[[j, k]].powi(2)).collect()),
            GoodnessOrdering::PoolSquareMean => pool((lo..hi).map(|j| a[[j, k]]).collect()).powi(2),
        };
    }
    total / d as f64
}

pub fn ref_softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean over positive and negative samples of the thresholded local loss.
pub fn ref_ff_loss(
    s: &[Array2<f64>],
    w: &[Array2<f64>],
    x_pos: &Array2<f64>,
    x_neg: &Array2<f64>,
    offsets: &[usize],
    cfg: &GoodnessConfig,
) -> f64 {
    let graphs = offsets.len() - 1;
    let mut total = 0.0;
    for (x, positive) in [(x_pos, true), (x_neg, false)] {
        let a = relu(&ref_preact(s, x, w));
        for g in 0..graphs {
            let good = ref_goodness(&a, offsets[g], offsets[g + 1], cfg);
            total += if positive {
                ref_softplus(cfg.threshold - good)
            } else {
                ref_softplus(good - cfg.threshold)
            };
        }
    }
    total / (2 * graphs) as f64
}

/// Mean cross-entropy of the dense reference baseline.
#[allow(clippy::too_many_arguments)]
pub fn ref_bp_loss(
    s: &Array2<f64>,
    x: &Array2<f64>,
    offsets: &[usize],
    layers: &[Array2<f64>],
    classifier: &Array2<f64>,
    bias: &Array2<f64>,
    labels: &[usize],
    pooling: Pooling,
) -> f64 {
    let mut h = x.clone();
    for w in layers {
        h = relu(&s.dot(&h).dot(w));
    }
    let graphs = offsets.len() - 1;
    let mut loss = 0.0;
    for g in 0..graphs {
        let (lo, hi) = (offsets[g], offsets[g + 1]);
        let mut pooled = h.slice(ndarray::s![lo..hi, ..]).sum_axis(ndarray::Axis(0));
        if pooling == Pooling::Mean {
            pooled /= (hi - lo) as f64;
        }
        let logits = pooled.dot(classifier) + bias.row(0);
        let lse = logits.iter().map(|v| v.exp()).sum::<f64>().ln();
        loss += lse - logits[labels[g]];
    }
    loss / graphs as f64
}

/// Central differences of `f` with respect to every entry of every tensor.
pub fn fd_grad(
    params: &mut [Array2<f64>],
    h: f64,
    mut f: impl FnMut(&[Array2<f64>]) -> f64,
) -> Vec<Array2<f64>> {
    let mut out: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
    for t in 0..params.len() {
        let (r, c) = params[t].dim();
        for i in 0..r {
            for j in 0..c {
                let orig = params[t][[i, j]];
                params[t][[i, j]] = orig + h;
                let up = f(params);
                params[t][[i, j]] = orig - h;
                let down = f(params);
                params[t][[i, j]] = orig;
                out[t][[i, j]] = (up - down) / (2.0 * h);
            }
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` over all tensors together.
pub fn rel_err(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.dim(), y.dim());
        for (u, v) in x.iter().zip(y) {
            diff += (u - v).powi(2);
            na += u * u;
            nb += v * v;
        }
    }
    let denom = f64::max(na, nb).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        diff.sqrt() / denom
    }
}

pub fn min_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Root holding TU dataset directories: `$GFF_DATA_DIR`, else the
/// workspace `data/` directory.
pub fn data_root() -> PathBuf {
    std::env::var_os("GFF_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

pub fn load_dataset(name: &str) -> Result<Dataset, String> {
    let dir = data_root().join(name);
    if !dir.is_dir() {
        return Err(format!(
            "dataset {name} not found under {}",
            data_root().display()
        ));
    }
    gff_core::parse_tu(&dir, name).map_err(|e| e.to_string())
}

/// Small two-class dataset of random graphs.
pub fn synthetic_dataset(seed: u64, count: usize, f: usize) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let graphs = (0..count)
        .map(|k| {
            let n = 3 + rng.below(6) as usize;
            random_graph(&mut rng, n, f, k % 2, 0.4)
        })
        .collect();
    Dataset {
        name: "SYNTH".into(),
        graphs,
        num_classes: 2,
        feature_width: f,
        source: PathBuf::from("synthetic"),
        label_values: vec![0, 1],
    }
}

/// Two classes told apart by which feature column is set on every node.
pub fn separable_dataset(seed: u64, count: usize) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let graphs = (0..count)
        .map(|k| {
            let label = k % 2;
            let n = 3 + rng.below(5) as usize;
            let g = random_graph(&mut rng, n, 2, label, 0.5);
            let mut x = Array2::zeros((n, 2));
            x.column_mut(label).fill(1.0);
            g.with_features(x).unwrap()
        })
        .collect();
    Dataset {
        name: "SEPARABLE".into(),
        graphs,
        num_classes: 2,
        feature_width: 2,
        source: PathBuf::from("synthetic"),
        label_values: vec![0, 1],
    }
}

pub mod gradcheck;
