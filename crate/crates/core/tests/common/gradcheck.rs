//! Random finite-difference gradient checks for both trainers.

use gff_core::bp::{bp_backward, bp_forward, cross_entropy, BpModel};
use gff_core::encoding::{sample_negative_label, EncodedBatch, EncodingMode};
use gff_core::fftrain::local_step;
use gff_core::goodness::{GoodnessConfig, GoodnessOrdering, GoodnessScope, Pooling};
use gff_core::layers::{LayerParams, MessageGraph, Relation};
use gff_core::{batch, Graph, SplitMix64};
use ndarray::{Array1, Array2, Axis};

use super::*;

const H: f64 = 1e-5;
/// Instances with a pre-activation this close to the rectifier kink are
/// redrawn: finite differences are meaningless there.
const KINK: f64 = 1e-3;
/// Central differences resolve gradients only down to about
/// `eps·|loss|/H ≈ 1e-11`; smaller gradients are redrawn too.
const MIN_GRAD: f64 = 1e-4;

fn norm(ts: &[Array2<f64>]) -> f64 {
    ts.iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct FfCase {
    pub mode: EncodingMode,
    pub ordering: GoodnessOrdering,
    pub pooling: Pooling,
    pub scope: GoodnessScope,
    /// Feed random unit rows instead of the encoded input, as a deeper layer sees.
    pub hidden_input: bool,
}

impl FfCase {
    pub fn all() -> Vec<FfCase> {
        let mut out = Vec::new();
        for (mode, scope) in [
            (EncodingMode::Concat, GoodnessScope::AllNodes),
            (EncodingMode::Virtual, GoodnessScope::VirtualNodeOnly),
            (EncodingMode::Virtual, GoodnessScope::AllNodes),
        ] {
            for ordering in [
                GoodnessOrdering::SquarePoolMean,
                GoodnessOrdering::PoolSquareMean,
            ] {
                for pooling in [Pooling::Additive, Pooling::Mean] {
                    for hidden_input in [false, true] {
                        out.push(FfCase {
                            mode,
                            ordering,
                            pooling,
                            scope,
                            hidden_input,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckResult {
    pub grad_rel_err: f64,
    pub loss_abs_err: f64,
}

fn small_batch(rng: &mut SplitMix64, f: usize, classes: usize) -> Vec<Graph> {
    let count = 1 + rng.below(3) as usize;
    (0..count)
        .map(|_| {
            let n = 3 + rng.below(6) as usize;
            let label = rng.below(classes as u64) as usize;
            random_graph(rng, n, f, label, 0.4)
        })
        .collect()
}

/// `None` when the drawn instance sits on a rectifier kink.
pub fn ff_check(seed: u64, case: FfCase) -> Option<CheckResult> {
    let mut rng = SplitMix64::new(seed);
    let f = 3 + rng.below(3) as usize;
    let classes = 2 + rng.below(2) as usize;
    let graphs = small_batch(&mut rng, f, classes);
    let refs: Vec<&Graph> = graphs.iter().collect();
    let enc = EncodedBatch::new(&refs, case.mode, classes).unwrap();
    let negs: Vec<usize> = enc
        .labels
        .iter()
        .map(|&y| sample_negative_label(y, classes, &mut rng).unwrap())
        .collect();
    let (x_pos, x_neg) = if case.hidden_input {
        let d = 3 + rng.below(3) as usize;
        let rows = enc.num_rows();
        (
            ref_normalize(&random_matrix(&mut rng, rows, d, 1.0)),
            ref_normalize(&random_matrix(&mut rng, rows, d, 1.0)),
        )
    } else {
        (
            enc.features_for(&enc.labels).unwrap(),
            enc.features_for(&negs).unwrap(),
        )
    };

    let dense: Vec<Array2<f64>> = match case.mode {
        EncodingMode::Concat => vec![block_diag(
            &graphs.iter().map(graph_dense_norm).collect::<Vec<_>>(),
        )],
        EncodingMode::Virtual => {
            let per: Vec<[Array2<f64>; 3]> = graphs.iter().map(dense_virtual_relations).collect();
            (0..3)
                .map(|r| block_diag(&per.iter().map(|p| p[r].clone()).collect::<Vec<_>>()))
                .collect()
        }
    };
    // The library's propagation operators must match the dense oracle.
    let lib: Vec<Array2<f64>> = match &enc.message {
        MessageGraph::Plain(adj) => vec![to_dense(adj)],
        MessageGraph::Relational(_) => Relation::ALL
            .iter()
            .map(|&r| to_dense(enc.message.relation(r).unwrap()))
            .collect(),
    };
    for (a, b) in lib.iter().zip(&dense) {
        assert!(
            (a - b).iter().all(|v| v.abs() < 1e-12),
            "propagation operator mismatch"
        );
    }

    let d_out = 3 + rng.below(3) as usize;
    let mut w: Vec<Array2<f64>> = (0..dense.len())
        .map(|_| random_matrix(&mut rng, x_pos.ncols(), d_out, 1.0))
        .collect();
    let zp = ref_preact(&dense, &x_pos, &w);
    let zn = ref_preact(&dense, &x_neg, &w);
    if min_abs(&zp) < KINK || min_abs(&zn) < KINK {
        return None;
    }

    let mut cfg = GoodnessConfig {
        ordering: case.ordering,
        pooling: case.pooling,
        scope: case.scope,
        threshold: 0.0,
    };
    let offsets = enc.offsets().to_vec();
    let mut mean_g = 0.0;
    for a in [relu(&zp), relu(&zn)] {
        for g in 0..graphs.len() {
            mean_g += ref_goodness(&a, offsets[g], offsets[g + 1], &cfg);
        }
    }
    mean_g /= (2 * graphs.len()) as f64;
    // Keep T away from the goodness: at T = g the positive and negative
    // slopes cancel and the gradient is pure rounding noise.
    let offset = rng.uniform(0.2, 0.5);
    cfg.threshold = mean_g
        * if rng.below(2) == 0 {
            1.0 - offset
        } else {
            1.0 + offset
        };

    let p = LayerParams::new(w.clone()).unwrap();
    let step = local_step(&p, &enc.message, &x_pos, &x_neg, &offsets, &cfg).unwrap();
    let loss = ref_ff_loss(&dense, &w, &x_pos, &x_neg, &offsets, &cfg);
    let fd = fd_grad(&mut w, H, |w| {
        ref_ff_loss(&dense, w, &x_pos, &x_neg, &offsets, &cfg)
    });
    if norm(&fd) < MIN_GRAD {
        return None;
    }
    Some(CheckResult {
        grad_rel_err: rel_err(&step.grads, &fd),
        loss_abs_err: (step.loss - loss).abs(),
    })
}

/// `None` when the drawn instance sits on a rectifier kink.
pub fn bp_check(seed: u64, pooling: Pooling) -> Option<CheckResult> {
    let mut rng = SplitMix64::new(seed);
    let f = 3 + rng.below(3) as usize;
    let hidden = 3 + rng.below(3) as usize;
    let classes = 2 + rng.below(2) as usize;
    let graphs = small_batch(&mut rng, f, classes);
    let refs: Vec<&Graph> = graphs.iter().collect();
    let gb = batch(&refs).unwrap();
    let s = block_diag(&graphs.iter().map(graph_dense_norm).collect::<Vec<_>>());
    let x = gb.features.clone();
    let offsets = gb.offsets().to_vec();
    let labels = gb.labels.clone();

    let mut params = vec![
        random_matrix(&mut rng, f, hidden, 1.0),
        random_matrix(&mut rng, hidden, hidden, 1.0),
        random_matrix(&mut rng, hidden, hidden, 1.0),
        random_matrix(&mut rng, hidden, classes, 1.0),
        random_matrix(&mut rng, 1, classes, 1.0),
    ];
    let mut h = x.clone();
    for w in &params[..3] {
        let z = s.dot(&h).dot(w);
        if min_abs(&z) < KINK {
            return None;
        }
        h = relu(&z);
    }

    let m = BpModel::new(
        params[..3]
            .iter()
            .map(|w| LayerParams::new(vec![w.clone()]).unwrap())
            .collect(),
        pooling,
        params[3].clone(),
        Array1::from(params[4].row(0).to_vec()),
    )
    .unwrap();
    let (logits, tape) = bp_forward(&m, &gb).unwrap();
    let (loss, dlogits) = cross_entropy(&logits, &labels).unwrap();
    let grads = bp_backward(&m, tape, &dlogits).unwrap();
    let mut analytic = grads.layers;
    analytic.push(grads.classifier);
    analytic.push(grads.bias.insert_axis(Axis(0)));

    let f_loss =
        |p: &[Array2<f64>]| ref_bp_loss(&s, &x, &offsets, &p[..3], &p[3], &p[4], &labels, pooling);
    let ref_loss = f_loss(&params);
    let fd = fd_grad(&mut params, H, f_loss);
    if norm(&fd) < MIN_GRAD {
        return None;
    }
    Some(CheckResult {
        grad_rel_err: rel_err(&analytic, &fd),
        loss_abs_err: (loss - ref_loss).abs(),
    })
}
