//! Synthetic workloads for the benchmarks.

use gff_core::{Dataset, Graph, SplitMix64};
use ndarray::Array2;

/// Random connected-ish graph: a path plus `extra` random chords, with
/// one-hot node features of width `f`.
pub fn random_graph(n: usize, extra: usize, f: usize, label: usize, rng: &mut SplitMix64) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    for _ in 0..extra {
        let a = rng.below(n as u64) as usize;
        let b = rng.below(n as u64) as usize;
        if a != b {
            edges.push((a, b));
        }
    }
    let mut x = Array2::zeros((n, f));
    for i in 0..n {
        x[[i, rng.below(f as u64) as usize]] = 1.0;
    }
    Graph::new(n, &edges, x, label).expect("valid synthetic graph")
}

/// A dataset of `count` graphs shaped roughly like a small molecule set.
pub fn molecule_like(count: usize, seed: u64) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let f = 7;
    let graphs = (0..count)
        .map(|k| {
            let n = 10 + rng.below(20) as usize;
            random_graph(n, n / 8, f, k % 2, &mut rng)
        })
        .collect();
    Dataset {
        name: "SYNTH".into(),
        graphs,
        num_classes: 2,
        feature_width: f,
        source: "synthetic".into(),
        label_values: vec![0, 1],
    }
}
