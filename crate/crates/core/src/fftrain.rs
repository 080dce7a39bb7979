//! Greedy layer-wise Forward-Forward training and label-goodness inference.
//!
//! Each layer is trained on its own loss: goodness of positive samples
//! (graphs encoded with their true label) is pushed above the threshold,
//! goodness of negative samples (a sampled wrong label) below it. Layer
//! `i + 1` sees the row-normalized activations of layer `i`, so no gradient
//! ever crosses a layer boundary.
//!
//! A graph is classified by encoding it with every candidate label and
//! summing the goodness of layers 2..L; the largest sum wins.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::encoding::{sample_negative_label, EncodedBatch, EncodingMode};
use crate::error::{GffError, Result};
use crate::goodness::{
    batch_goodness, batch_goodness_backward, local_loss, GoodnessConfig, GoodnessScope,
};
use crate::graph::Graph;
use crate::layers::{
    combine, row_l2_normalize, weight_grad_from_propagated, LayerParams, MessageGraph,
};
use crate::rng::SplitMix64;
use crate::tudata::{Dataset, Split};

/// Stream ids for [`SplitMix64::derive`].
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_SHUFFLE: u64 = 2;
pub(crate) const STREAM_NEGATIVE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Layer `i` trains for its share of the epochs, then freezes.
    Sequential,
    /// Every layer takes one local step per batch.
    Simultaneous,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Sequential => "sequential",
            Schedule::Simultaneous => "simultaneous",
        })
    }
}

impl FromStr for Schedule {
    type Err = GffError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Schedule::Sequential),
            "simultaneous" => Ok(Schedule::Simultaneous),
            other => Err(GffError::Config(format!(
                "unknown schedule {other:?}, expected sequential or simultaneous"
            ))),
        }
    }
}

impl FromStr for EncodingMode {
    type Err = GffError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(EncodingMode::Concat),
            "virtual" => Ok(EncodingMode::Virtual),
            other => Err(GffError::Config(format!(
                "unknown encoding {other:?}, expected concat or virtual"
            ))),
        }
    }
}

impl fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodingMode::Concat => "concat",
            EncodingMode::Virtual => "virtual",
        })
    }
}

/// Hyperparameters of one training run, shared by both trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    pub layers: usize,
    pub encoding: EncodingMode,
    pub goodness: GoodnessConfig,
    pub schedule: Schedule,
    /// Row-normalize the encoded input before the first layer.
    pub normalize_input: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            lr: 1e-3,
            hidden: 128,
            layers: 3,
            encoding: EncodingMode::Concat,
            goodness: GoodnessConfig::default(),
            schedule: Schedule::Sequential,
            normalize_input: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(GffError::Config(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive");
        }
        if self.layers < 2 {
            return bad("at least 2 layers are needed (inference skips layer 1)");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("learning rate must be finite and non-negative");
        }
        if !self.goodness.threshold.is_finite() {
            return bad("threshold must be finite");
        }
        if self.goodness.scope == GoodnessScope::VirtualNodeOnly
            && self.encoding != EncodingMode::Virtual
        {
            return bad("virtual-node-only goodness requires virtual encoding");
        }
        Ok(())
    }

    /// Layer trained during `epoch` under the sequential schedule. Epochs
    /// are split evenly, earlier layers taking the remainder.
    pub fn sequential_layer(&self, epoch: usize) -> usize {
        let base = self.epochs / self.layers;
        let extra = self.epochs % self.layers;
        let mut end = 0;
        for layer in 0..self.layers {
            end += base + usize::from(layer < extra);
            if epoch < end {
                return layer;
            }
        }
        self.layers - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GffModel {
    pub layers: Vec<LayerParams>,
    /// Raw node feature width, before label encoding.
    pub input_width: usize,
    pub hidden: usize,
    pub goodness: GoodnessConfig,
    pub encoding: EncodingMode,
    pub num_classes: usize,
    pub normalize_input: bool,
}

impl GffModel {
    pub fn init(
        input_width: usize,
        num_classes: usize,
        cfg: &TrainConfig,
        rng: &mut SplitMix64,
    ) -> Self {
        let relations = match cfg.encoding {
            EncodingMode::Concat => 1,
            EncodingMode::Virtual => 3,
        };
        let d0 = cfg.encoding.input_width(input_width, num_classes);
        let layers = (0..cfg.layers)
            .map(|i| {
                let d_in = if i == 0 { d0 } else { cfg.hidden };
                LayerParams::glorot(d_in, cfg.hidden, relations, rng)
            })
            .collect();
        Self {
            layers,
            input_width,
            hidden: cfg.hidden,
            goodness: cfg.goodness,
            encoding: cfg.encoding,
            num_classes,
            normalize_input: cfg.normalize_input,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(LayerParams::num_values).sum()
    }

    fn check_width(&self, f: usize) -> Result<()> {
        if f != self.input_width {
            return Err(GffError::Shape(format!(
                "graph feature width {f}, model expects {}",
                self.input_width
            )));
        }
        Ok(())
    }

    /// Per-layer goodness of every graph in `enc` under `labels`.
    /// Goodness is taken on rectified activations before normalization.
    pub fn layer_goodness(&self, enc: &EncodedBatch, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
        let mut x = enc.features_for(labels)?;
        if self.normalize_input {
            x = row_l2_normalize(x.view());
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for p in &self.layers {
            let z = combine(p, &enc.message.propagate_all(x.view())?)?;
            let a = z.mapv(|v| v.max(0.0));
            out.push(batch_goodness(a.view(), enc.offsets(), &self.goodness)?);
            x = row_l2_normalize(a.view());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Σ of layer 2..L goodness for each candidate label.
    pub label_goodness: Vec<f64>,
    pub chosen: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &GffModel, g: &Graph) -> Result<Prediction> {
    Ok(predict_batch(model, &[g])?.remove(0))
}

pub fn predict_batch(model: &GffModel, graphs: &[&Graph]) -> Result<Vec<Prediction>> {
    for g in graphs {
        model.check_width(g.feature_width())?;
    }
    let enc = EncodedBatch::new(graphs, model.encoding, model.num_classes)?;
    let mut scores = vec![vec![0.0; model.num_classes]; graphs.len()];
    for c in 0..model.num_classes {
        let per_layer = model.layer_goodness(&enc, &vec![c; graphs.len()])?;
        for layer in per_layer.iter().skip(1) {
            for (row, g) in scores.iter_mut().zip(layer) {
                row[c] += g;
            }
        }
    }
    Ok(scores
        .into_iter()
        .map(|label_goodness| Prediction {
            chosen: argmax(&label_goodness),
            label_goodness,
        })
        .collect())
}

pub(crate) const EVAL_CHUNK: usize = 256;

pub fn evaluate(model: &GffModel, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(GffError::Domain("evaluation on an empty index list".into()));
    }
    let correct: usize = indices
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| -> Result<usize> {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let preds = predict_batch(model, &graphs)?;
            Ok(preds
                .iter()
                .zip(&graphs)
                .filter(|(p, g)| p.chosen == g.label())
                .count())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(correct as f64 / indices.len() as f64)
}

/// Per-run training measurements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// Mean batch loss per epoch (averaged over the layers trained that epoch).
    pub epoch_losses: Vec<f64>,
    /// Layers updated in each epoch.
    pub epoch_layers: Vec<Vec<usize>>,
    pub epoch_ms: Vec<f64>,
    /// Largest number of f64 activation values held for a gradient.
    pub peak_activations: usize,
    pub optimizer_steps: u64,
}

impl TrainRecord {
    pub fn mean_epoch_ms(&self) -> f64 {
        if self.epoch_ms.is_empty() {
            0.0
        } else {
            self.epoch_ms.iter().sum::<f64>() / self.epoch_ms.len() as f64
        }
    }
}

/// Result of one local update of one layer on a positive/negative batch.
pub struct LocalStep {
    pub loss: f64,
    pub grads: Vec<Array2<f64>>,
    pub pos_activations: Array2<f64>,
    pub neg_activations: Array2<f64>,
    pub pos_goodness: Vec<f64>,
    pub neg_goodness: Vec<f64>,
    /// Values held between the forward pass and the weight gradient.
    pub retained: usize,
}

/// Loss and weight gradient of one layer, averaged over the
/// `2 × batch` positive and negative samples.
pub fn local_step(
    p: &LayerParams,
    msg: &MessageGraph,
    pos_input: &Array2<f64>,
    neg_input: &Array2<f64>,
    offsets: &[usize],
    cfg: &GoodnessConfig,
) -> Result<LocalStep> {
    let graphs = offsets.len() - 1;
    let denom = (2 * graphs) as f64;
    let mut loss = 0.0;
    let mut grads: Vec<Array2<f64>> = Vec::new();
    let mut retained = 0;
    let mut outputs = Vec::with_capacity(2);
    for (x, positive) in [(pos_input, true), (neg_input, false)] {
        let propagated = msg.propagate_all(x.view())?;
        let z = combine(p, &propagated)?;
        let a = z.mapv(|v| v.max(0.0));
        retained += propagated.iter().map(|m| m.len()).sum::<usize>() + z.len() + a.len();
        let g = batch_goodness(a.view(), offsets, cfg)?;
        let mut slopes = Vec::with_capacity(graphs);
        for &gk in &g {
            let (l, s) = local_loss(gk, positive, cfg.threshold);
            loss += l;
            slopes.push(s / denom);
        }
        let da = batch_goodness_backward(a.view(), offsets, cfg, &slopes)?;
        let part = weight_grad_from_propagated(&propagated, da.view(), z.view(), p.relations())?;
        if grads.is_empty() {
            grads = part;
        } else {
            for (acc, g) in grads.iter_mut().zip(part) {
                *acc += &g;
            }
        }
        outputs.push((a, g));
    }
    let (neg_activations, neg_goodness) = outputs.pop().expect("negative pass");
    let (pos_activations, pos_goodness) = outputs.pop().expect("positive pass");
    Ok(LocalStep {
        loss: loss / denom,
        grads,
        pos_activations,
        neg_activations,
        pos_goodness,
        neg_goodness,
        retained,
    })
}

fn non_finite(layer: usize, step: &LocalStep) -> Option<String> {
    if step.loss.is_finite() {
        return None;
    }
    let bad = step
        .pos_goodness
        .iter()
        .chain(&step.neg_goodness)
        .find(|g| !g.is_finite())
        .copied()
        .unwrap_or(f64::NAN);
    Some(format!(
        "layer {}: non-finite loss {} (goodness {bad})",
        layer + 1,
        step.loss
    ))
}

/// Trains a Forward-Forward GCN on `split.train`.
pub fn train(
    ds: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(GffModel, TrainRecord)> {
    cfg.validate()?;
    if ds.num_classes < 2 {
        return Err(GffError::Domain("training needs at least 2 classes".into()));
    }
    if split.train.is_empty() {
        return Err(GffError::Domain("empty training split".into()));
    }
    let mut model = GffModel::init(
        ds.feature_width,
        ds.num_classes,
        cfg,
        &mut SplitMix64::derive(seed, STREAM_INIT),
    );
    let mut shuffle_rng = SplitMix64::derive(seed, STREAM_SHUFFLE);
    let mut neg_rng = SplitMix64::derive(seed, STREAM_NEGATIVE);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut optimizers: Vec<AdamState> = model
        .layers
        .iter()
        .map(|p| AdamState::new(adam_cfg, &p.weights))
        .collect();

    let mut record = TrainRecord::default();
    let mut order = split.train.clone();
    for epoch in 0..cfg.epochs {
        let active: Vec<usize> = match cfg.schedule {
            Schedule::Sequential => vec![cfg.sequential_layer(epoch)],
            Schedule::Simultaneous => (0..cfg.layers).collect(),
        };
        let deepest = *active.last().expect("active layer");
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let enc = EncodedBatch::new(&graphs, cfg.encoding, ds.num_classes)?;
            let negatives = enc
                .labels
                .iter()
                .map(|&y| sample_negative_label(y, ds.num_classes, &mut neg_rng))
                .collect::<Result<Vec<_>>>()?;
            let mut xp = enc.features_for(&enc.labels)?;
            let mut xn = enc.features_for(&negatives)?;
            if cfg.normalize_input {
                xp = row_l2_normalize(xp.view());
                xn = row_l2_normalize(xn.view());
            }
            // Indexed: the layer is updated in place while the loop runs.
            #[allow(clippy::needless_range_loop)]
            for layer in 0..=deepest {
                let p = &model.layers[layer];
                if active.contains(&layer) {
                    let step = local_step(p, &enc.message, &xp, &xn, enc.offsets(), &cfg.goodness)?;
                    if let Some(msg) = non_finite(layer, &step) {
                        return Err(GffError::Training(format!("epoch {}: {msg}", epoch + 1)));
                    }
                    record.peak_activations = record.peak_activations.max(step.retained);
                    loss_sum += step.loss;
                    loss_count += 1;
                    let params = &mut model.layers[layer].weights;
                    let mut refs: Vec<&mut Array2<f64>> = params.iter_mut().collect();
                    optimizers[layer]
                        .step(&mut refs, &step.grads)
                        .map_err(|e| GffError::Training(format!("layer {}: {e}", layer + 1)))?;
                    record.optimizer_steps += 1;
                    if layer < deepest {
                        xp = row_l2_normalize(step.pos_activations.view());
                        xn = row_l2_normalize(step.neg_activations.view());
                    }
                } else {
                    // Frozen layer: forward only.
                    let zp = combine(p, &enc.message.propagate_all(xp.view())?)?;
                    let zn = combine(p, &enc.message.propagate_all(xn.view())?)?;
                    xp = row_l2_normalize(zp.mapv(|v| v.max(0.0)).view());
                    xn = row_l2_normalize(zn.mapv(|v| v.max(0.0)).view());
                }
            }
        }
        record.epoch_ms.push(started.elapsed().as_secs_f64() * 1e3);
        record
            .epoch_losses
            .push(loss_sum / loss_count.max(1) as f64);
        record.epoch_layers.push(active);
    }
    if !model.layers.iter().all(LayerParams::is_finite) {
        return Err(GffError::Training(
            "non-finite weights after training".into(),
        ));
    }
    Ok((model, record))
}
