//! Graph convolutional networks for graph classification, trained either
//! layer by layer with the Forward-Forward procedure or end to end with
//! backpropagation.
//!
//! The pieces, bottom up: [`graph`] (sparse graphs, normalized adjacency,
//! batching), [`tudata`] (TU-format datasets and stratified splits),
//! [`encoding`] (label injection for positive and negative samples),
//! [`layers`] (GCN / relational GCN forward and weight gradients),
//! [`goodness`] (graph goodness and the thresholded local loss),
//! [`fftrain`] and [`bp`] (the two trainers), and [`harness`] (multi-seed
//! runs and reports).

pub mod adam;
pub mod bp;
pub mod checkpoint;
pub mod encoding;
pub mod error;
pub mod fftrain;
pub mod goodness;
pub mod graph;
pub mod harness;
pub mod layers;
pub mod rng;
pub mod tudata;

pub use adam::{AdamConfig, AdamState};
pub use bp::{
    bp_backward, bp_forward, cross_entropy, evaluate_bp, predict_bp, train_bp, BpGrads, BpModel,
    Tape,
};
pub use checkpoint::{Checkpoint, TrainedModel};
pub use encoding::{
    encode_concat, encode_virtual, sample_negative_label, EncodedBatch, EncodedGraph, EncodingMode,
};
pub use error::{GffError, Result};
pub use fftrain::{
    evaluate, local_step, predict, predict_batch, train, GffModel, LocalStep, Prediction, Schedule,
    TrainConfig, TrainRecord,
};
pub use goodness::{
    batch_goodness, goodness, goodness_grad, local_loss, GoodnessConfig, GoodnessOrdering,
    GoodnessScope, Pooling,
};
pub use graph::{batch, normalize_adjacency, Graph, GraphBatch, NormAdjacency};
pub use harness::{
    bench_speed, inspect_dataset, run_experiment, ExperimentConfig, Method, RunReport, SpeedReport,
};
pub use layers::{
    forward, gcn_forward, layer_weight_grad, rgcn_forward, row_l2_normalize, LayerParams,
    MessageGraph, Relation, RelationalAdjacency,
};
pub use rng::SplitMix64;
pub use tudata::{parse_tu, split, Dataset, DatasetStats, Split};
