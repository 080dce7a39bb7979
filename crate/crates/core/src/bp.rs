//! Backpropagation GCN baseline: GCN layers with rectifiers, per-graph
//! pooling readout and an affine classifier, trained end to end on
//! cross-entropy with a hand-written reverse pass.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::error::{GffError, Result};
use crate::fftrain::{argmax, TrainConfig, TrainRecord, EVAL_CHUNK, STREAM_INIT, STREAM_SHUFFLE};
use crate::goodness::Pooling;
use crate::graph::{batch, segment_mean, segment_sum, Graph, GraphBatch, NormAdjacency};
use crate::layers::{rectifier_backward, LayerParams};
use crate::rng::SplitMix64;
use crate::tudata::{Dataset, Split};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpModel {
    pub layers: Vec<LayerParams>,
    pub pooling: Pooling,
    /// `hidden × C`.
    pub classifier: Array2<f64>,
    pub bias: Array1<f64>,
    /// Bumped on every parameter update; tapes remember the version they saw.
    #[serde(skip)]
    version: u64,
}

impl PartialEq for BpModel {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.pooling == other.pooling
            && self.classifier == other.classifier
            && self.bias == other.bias
    }
}

impl BpModel {
    pub fn new(
        layers: Vec<LayerParams>,
        pooling: Pooling,
        classifier: Array2<f64>,
        bias: Array1<f64>,
    ) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].d_out() != w[1].d_in() {
                return Err(GffError::Shape(
                    "consecutive layer widths do not compose".into(),
                ));
            }
        }
        let last = layers
            .last()
            .ok_or_else(|| GffError::Shape("model without layers".into()))?;
        if classifier.nrows() != last.d_out() || bias.len() != classifier.ncols() {
            return Err(GffError::Shape(format!(
                "classifier {:?} and bias {} do not fit hidden width {}",
                classifier.dim(),
                bias.len(),
                last.d_out()
            )));
        }
        Ok(Self {
            layers,
            pooling,
            classifier,
            bias,
            version: 0,
        })
    }

    pub fn init(
        input_width: usize,
        num_classes: usize,
        cfg: &TrainConfig,
        rng: &mut SplitMix64,
    ) -> Self {
        let layers = (0..cfg.layers)
            .map(|i| {
                let d_in = if i == 0 { input_width } else { cfg.hidden };
                LayerParams::glorot(d_in, cfg.hidden, 1, rng)
            })
            .collect();
        let classifier = LayerParams::glorot(cfg.hidden, num_classes, 1, rng)
            .weights
            .remove(0);
        Self {
            layers,
            pooling: Pooling::Additive,
            classifier,
            bias: Array1::zeros(num_classes),
            version: 0,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.ncols()
    }

    fn pool(&self, a: &Array2<f64>, offsets: &[usize]) -> Array2<f64> {
        match self.pooling {
            Pooling::Additive => segment_sum(a.view(), offsets),
            Pooling::Mean => segment_mean(a.view(), offsets),
        }
    }

    /// Parameter tensors in a fixed order: layer weights, classifier, bias (as `1 × C`).
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> =
            self.layers.iter_mut().map(|l| &mut l.weights[0]).collect();
        out.push(&mut self.classifier);
        out
    }
}

/// Activations kept from a forward pass for the reverse pass.
#[derive(Debug)]
pub struct Tape<'a> {
    adj: &'a NormAdjacency,
    offsets: Vec<usize>,
    /// `S · X_l` per layer.
    propagated: Vec<Array2<f64>>,
    z: Vec<Array2<f64>>,
    a: Vec<Array2<f64>>,
    pooled: Array2<f64>,
    model_version: u64,
}

impl Tape<'_> {
    /// Number of f64 values retained.
    pub fn retained(&self) -> usize {
        self.propagated.iter().map(|m| m.len()).sum::<usize>()
            + self.z.iter().map(|m| m.len()).sum::<usize>()
            + self.a.iter().map(|m| m.len()).sum::<usize>()
            + self.pooled.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpGrads {
    pub layers: Vec<Array2<f64>>,
    pub classifier: Array2<f64>,
    pub bias: Array1<f64>,
}

pub fn bp_forward<'a>(m: &BpModel, batch: &'a GraphBatch) -> Result<(Array2<f64>, Tape<'a>)> {
    if batch.features.ncols() != m.input_width() {
        return Err(GffError::Shape(format!(
            "batch feature width {}, model expects {}",
            batch.features.ncols(),
            m.input_width()
        )));
    }
    let mut propagated = Vec::with_capacity(m.layers.len());
    let mut zs = Vec::with_capacity(m.layers.len());
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(m.layers.len());
    for p in &m.layers {
        let x = acts.last().unwrap_or(&batch.features);
        let sx = batch.adj.propagate(x.view())?;
        let z = sx.dot(&p.weights[0]);
        let a = z.mapv(|v| v.max(0.0));
        propagated.push(sx);
        zs.push(z);
        acts.push(a);
    }
    let pooled = m.pool(acts.last().expect("layers"), batch.offsets());
    let logits = pooled.dot(&m.classifier) + &m.bias;
    Ok((
        logits,
        Tape {
            adj: &batch.adj,
            offsets: batch.offsets().to_vec(),
            propagated,
            z: zs,
            a: acts,
            pooled,
            model_version: m.version,
        },
    ))
}

/// Mean negative log-softmax of the true class and its gradient.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (b, c) = logits.dim();
    if labels.len() != b {
        return Err(GffError::Shape(format!(
            "{} labels for {b} rows",
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Array2::zeros((b, c));
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        if y >= c {
            return Err(GffError::Domain(format!("label {y} outside [0, {c})")));
        }
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        for k in 0..c {
            grad[[i, k]] = ((row[k] - lse).exp() - f64::from(u8::from(k == y))) / b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

/// Reverse pass. Consumes the tape.
pub fn bp_backward(m: &BpModel, tape: Tape<'_>, dlogits: &Array2<f64>) -> Result<BpGrads> {
    if tape.model_version != m.version {
        return Err(GffError::Contract(format!(
            "tape recorded at model version {}, model is at {}",
            tape.model_version, m.version
        )));
    }
    let graphs = tape.offsets.len() - 1;
    if dlogits.dim() != (graphs, m.num_classes()) {
        return Err(GffError::Shape(format!(
            "dlogits has shape {:?}, expected ({graphs}, {})",
            dlogits.dim(),
            m.num_classes()
        )));
    }
    let classifier = tape.pooled.t().dot(dlogits);
    let bias = dlogits.sum_axis(Axis(0));
    let dpooled = dlogits.dot(&m.classifier.t());

    let last = tape.a.last().expect("layers");
    let mut da = Array2::zeros(last.raw_dim());
    for g in 0..graphs {
        let (lo, hi) = (tape.offsets[g], tape.offsets[g + 1]);
        let scale = match m.pooling {
            Pooling::Additive => 1.0,
            Pooling::Mean => 1.0 / (hi - lo).max(1) as f64,
        };
        let src = &dpooled.row(g) * scale;
        for j in lo..hi {
            da.row_mut(j).assign(&src);
        }
    }

    let mut layers = vec![Array2::zeros((0, 0)); m.layers.len()];
    for l in (0..m.layers.len()).rev() {
        let dz = rectifier_backward(da.view(), tape.z[l].view());
        layers[l] = tape.propagated[l].t().dot(&dz);
        if l > 0 {
            let dsx = dz.dot(&m.layers[l].weights[0].t());
            da = tape.adj.propagate_transpose(dsx.view())?;
        }
    }
    Ok(BpGrads {
        layers,
        classifier,
        bias,
    })
}

fn optimizer(m: &BpModel, cfg: AdamConfig) -> AdamState {
    let mut shapes: Vec<Array2<f64>> = m.layers.iter().map(|l| l.weights[0].clone()).collect();
    shapes.push(m.classifier.clone());
    shapes.push(m.bias.clone().insert_axis(Axis(0)));
    AdamState::new(cfg, shapes.iter())
}

fn apply(m: &mut BpModel, grads: BpGrads, adam: &mut AdamState) -> Result<()> {
    let mut flat = grads.layers;
    flat.push(grads.classifier);
    flat.push(grads.bias.insert_axis(Axis(0)));
    let mut bias2 = m.bias.clone().insert_axis(Axis(0));
    {
        let mut tensors = m.tensors_mut();
        tensors.push(&mut bias2);
        adam.step(&mut tensors, &flat)?;
    }
    m.bias = bias2.remove_axis(Axis(0));
    m.version += 1;
    Ok(())
}

pub fn train_bp(
    ds: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(BpModel, TrainRecord)> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(GffError::Domain("empty training split".into()));
    }
    let mut model = BpModel::init(
        ds.feature_width,
        ds.num_classes,
        cfg,
        &mut SplitMix64::derive(seed, STREAM_INIT),
    );
    let mut shuffle_rng = SplitMix64::derive(seed, STREAM_SHUFFLE);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = optimizer(&model, adam_cfg);

    let mut record = TrainRecord::default();
    let mut order = split.train.clone();
    let all_layers: Vec<usize> = (0..cfg.layers).collect();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let gb = batch(&graphs)?;
            let (logits, tape) = bp_forward(&model, &gb)?;
            record.peak_activations = record.peak_activations.max(tape.retained() + logits.len());
            let (loss, dlogits) = cross_entropy(&logits, &gb.labels)?;
            if !loss.is_finite() {
                return Err(GffError::Training(format!(
                    "epoch {}: non-finite loss {loss}",
                    epoch + 1
                )));
            }
            let grads = bp_backward(&model, tape, &dlogits)?;
            apply(&mut model, grads, &mut adam)?;
            record.optimizer_steps += 1;
            loss_sum += loss;
            batches += 1;
        }
        record.epoch_ms.push(started.elapsed().as_secs_f64() * 1e3);
        record.epoch_losses.push(loss_sum / batches.max(1) as f64);
        record.epoch_layers.push(all_layers.clone());
    }
    Ok((model, record))
}

pub fn predict_bp(m: &BpModel, graphs: &[&Graph]) -> Result<Vec<usize>> {
    let gb = batch(graphs)?;
    let (logits, _) = bp_forward(m, &gb)?;
    Ok(logits
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("standard layout")))
        .collect())
}

pub fn evaluate_bp(m: &BpModel, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(GffError::Domain("evaluation on an empty index list".into()));
    }
    let correct: usize = indices
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| -> Result<usize> {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let preds = predict_bp(m, &graphs)?;
            Ok(preds
                .iter()
                .zip(&graphs)
                .filter(|(p, g)| **p == g.label())
                .count())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(correct as f64 / indices.len() as f64)
}
