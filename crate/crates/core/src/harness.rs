//! Multi-seed experiment runs, FF/BP speed comparison and dataset
//! inspection, with JSON and CSV outputs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{evaluate_bp, train_bp};
use crate::checkpoint::{Checkpoint, TrainedModel, FORMAT_VERSION};
use crate::encoding::EncodingMode;
use crate::error::{GffError, Result};
use crate::fftrain::{evaluate, train, Schedule, TrainConfig, TrainRecord};
use crate::goodness::{GoodnessConfig, GoodnessOrdering, GoodnessScope, Pooling};
use crate::tudata::{parse_tu, split, Dataset, DatasetStats};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str =
    "dataset,method,encoding,goodness,pooling,seed,accuracy,epoch_ms,peak_activations";

pub const STD_FORMULA: &str =
    "population: sqrt(sum((x - mean)^2) / n) over the seeds that finished";

pub const ACCURACY_PROTOCOL: &str = "test accuracy of the model after the last epoch; \
     whether published numbers use the last or the best epoch is not known";

/// BP-over-FF training speedups published for a PyTorch implementation.
/// They describe a different software stack and are reported for context only.
pub const REFERENCE_SPEEDUPS: &[(&str, f64)] = &[
    ("PROTEINS", 22.0),
    ("IMDB-BINARY", 18.0),
    ("BZR", 35.0),
    ("COX2", 22.0),
    ("MUTAG", 61.0),
    ("SN12C", 2.5),
    ("SW-620H", 2.7),
    ("Yeast", 2.6),
    ("Peking_1", 42.0),
    ("COLLAB", 2.9),
    ("MSRC_9", 28.0),
];

pub fn reference_speedup(dataset: &str) -> Option<f64> {
    REFERENCE_SPEEDUPS
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(dataset))
        .map(|&(_, v)| v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ff,
    Bp,
    Both,
}

impl Method {
    fn expand(self) -> &'static [Method] {
        match self {
            Method::Ff => &[Method::Ff],
            Method::Bp => &[Method::Bp],
            Method::Both => &[Method::Ff, Method::Bp],
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ff => "ff",
            Method::Bp => "bp",
            Method::Both => "both",
        })
    }
}

impl FromStr for Method {
    type Err = GffError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ff" => Ok(Method::Ff),
            "bp" => Ok(Method::Bp),
            "both" => Ok(Method::Both),
            other => Err(GffError::Config(format!(
                "unknown method {other:?}, expected ff, bp or both"
            ))),
        }
    }
}

/// Experiment description, read from JSON. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub threshold: f64,
    pub encoding: EncodingMode,
    pub goodness: GoodnessOrdering,
    pub pooling: Pooling,
    pub schedule: Schedule,
    pub hidden: usize,
    pub layers: usize,
    pub normalize_input: bool,
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dataset: "MUTAG".into(),
            data_dir: PathBuf::from("data"),
            method: Method::Both,
            seeds: vec![0, 1, 2, 3, 4],
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            threshold: t.goodness.threshold,
            encoding: t.encoding,
            goodness: t.goodness.ordering,
            pooling: t.goodness.pooling,
            schedule: t.schedule,
            hidden: t.hidden,
            layers: t.layers,
            normalize_input: t.normalize_input,
            fractions: [0.8, 0.1, 0.1],
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| GffError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| GffError::Config(format!("{}: {e}", path.display())))
    }

    /// Training hyperparameters. Virtual encoding scores only the virtual node.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            hidden: self.hidden,
            layers: self.layers,
            encoding: self.encoding,
            goodness: GoodnessConfig {
                ordering: self.goodness,
                pooling: self.pooling,
                scope: match self.encoding {
                    EncodingMode::Concat => GoodnessScope::AllNodes,
                    EncodingMode::Virtual => GoodnessScope::VirtualNodeOnly,
                },
                threshold: self.threshold,
            },
            schedule: self.schedule,
            normalize_input: self.normalize_input,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(GffError::Config("seed list is empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(GffError::Config("seed list contains duplicates".into()));
        }
        self.train_config().validate()
    }

    fn fractions(&self) -> (f64, f64, f64) {
        (self.fractions[0], self.fractions[1], self.fractions[2])
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let dir = self.data_dir.join(&self.dataset);
        if !dir.is_dir() {
            return Err(GffError::io(
                &dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        parse_tu(&dir, &self.dataset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub status: SeedStatus,
    pub error: Option<String>,
    pub test_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub mean_epoch_ms: Option<f64>,
    pub peak_activations: Option<usize>,
    pub optimizer_steps: Option<u64>,
    pub epoch_losses: Vec<f64>,
    pub epoch_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub seeds: Vec<SeedResult>,
    pub finished: usize,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub mean_epoch_ms: Option<f64>,
    pub peak_activations: Option<usize>,
}

impl MethodReport {
    fn new(method: Method, seeds: Vec<SeedResult>) -> Self {
        let accs: Vec<f64> = seeds.iter().filter_map(|s| s.test_accuracy).collect();
        let (mean, std) = mean_std(&accs).map_or((None, None), |(m, s)| (Some(m), Some(s)));
        let ms: Vec<f64> = seeds.iter().filter_map(|s| s.mean_epoch_ms).collect();
        Self {
            method,
            finished: accs.len(),
            mean_accuracy: mean,
            std_accuracy: std,
            mean_epoch_ms: mean_std(&ms).map(|(m, _)| m),
            peak_activations: seeds.iter().filter_map(|s| s.peak_activations).max(),
            seeds,
        }
    }

    /// True when some seed stopped on a non-finite loss or gradient.
    pub fn diverged(&self) -> bool {
        self.seeds.iter().any(|s| s.status == SeedStatus::Failed)
    }
}

/// Population mean and standard deviation; `None` for an empty slice.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub dataset: String,
    pub dataset_hash: String,
    pub dataset_stats: DatasetStats,
    pub std_formula: String,
    pub accuracy_protocol: String,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodReport>,
}

impl RunReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn csv(&self) -> String {
        let c = &self.config;
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for mr in &self.methods {
            for s in &mr.seeds {
                let opt = |v: Option<String>| v.unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    self.dataset,
                    mr.method,
                    c.encoding,
                    c.goodness,
                    c.pooling,
                    s.seed,
                    opt(s.test_accuracy.map(|v| v.to_string())),
                    opt(s.mean_epoch_ms.map(|v| format!("{v:.3}"))),
                    opt(s.peak_activations.map(|v| v.to_string())),
                ));
            }
        }
        out
    }
}

/// A finished experiment: the report plus one checkpoint per finished seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: RunReport,
    pub checkpoints: Vec<(Method, u64, Checkpoint)>,
}

impl Experiment {
    /// Writes `report.json`, `summary.csv` and `checkpoints/<method>-seed<k>.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let ckpt_dir = dir.join("checkpoints");
        fs::create_dir_all(&ckpt_dir).map_err(|e| GffError::io(&ckpt_dir, e))?;
        let json = serde_json::to_string_pretty(&self.report)
            .map_err(|e| GffError::Config(e.to_string()))?;
        let report = dir.join("report.json");
        fs::write(&report, json).map_err(|e| GffError::io(&report, e))?;
        let csv = dir.join("summary.csv");
        fs::write(&csv, self.report.csv()).map_err(|e| GffError::io(&csv, e))?;
        for (method, seed, ckpt) in &self.checkpoints {
            ckpt.save(ckpt_dir.join(format!("{method}-seed{seed}.json")))?;
        }
        Ok(())
    }
}

fn run_seed(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    method: Method,
    seed: u64,
) -> Result<(SeedResult, Option<Checkpoint>)> {
    let sp = split(ds, cfg.fractions(), seed)?;
    let tc = cfg.train_config();
    let outcome: Result<(TrainedModel, TrainRecord, f64, f64)> = match method {
        Method::Ff => train(ds, &sp, &tc, seed).and_then(|(m, rec)| {
            let test = evaluate(&m, ds, &sp.test)?;
            let val = evaluate(&m, ds, &sp.val)?;
            Ok((TrainedModel::Gff(m), rec, test, val))
        }),
        Method::Bp => train_bp(ds, &sp, &tc, seed).and_then(|(m, rec)| {
            let test = evaluate_bp(&m, ds, &sp.test)?;
            let val = evaluate_bp(&m, ds, &sp.val)?;
            Ok((TrainedModel::Bp(m), rec, test, val))
        }),
        Method::Both => unreachable!("expanded by the caller"),
    };
    match outcome {
        Ok((model, rec, test, val)) => Ok((
            SeedResult {
                seed,
                status: SeedStatus::Ok,
                error: None,
                test_accuracy: Some(test),
                val_accuracy: Some(val),
                mean_epoch_ms: Some(rec.mean_epoch_ms()),
                peak_activations: Some(rec.peak_activations),
                optimizer_steps: Some(rec.optimizer_steps),
                epoch_losses: rec.epoch_losses,
                epoch_ms: rec.epoch_ms,
            },
            Some(Checkpoint {
                format_version: FORMAT_VERSION,
                dataset: cfg.dataset.clone(),
                data_dir: cfg.data_dir.clone(),
                dataset_hash: ds.content_hash(),
                fractions: cfg.fractions,
                seed,
                model,
            }),
        )),
        Err(e @ GffError::Training(_)) => Ok((
            SeedResult {
                seed,
                status: SeedStatus::Failed,
                error: Some(e.to_string()),
                test_accuracy: None,
                val_accuracy: None,
                mean_epoch_ms: None,
                peak_activations: None,
                optimizer_steps: None,
                epoch_losses: Vec::new(),
                epoch_ms: Vec::new(),
            },
            None,
        )),
        Err(e) => Err(e),
    }
}

/// Trains every configured method on every seed of an already parsed
/// dataset. Seeds run concurrently; divergence fails only that seed.
pub fn run_on(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let mut methods = Vec::new();
    let mut checkpoints = Vec::new();
    for &method in cfg.method.expand() {
        let results = cfg
            .seeds
            .par_iter()
            .map(|&seed| run_seed(ds, cfg, method, seed))
            .collect::<Result<Vec<_>>>()?;
        let mut seeds = Vec::with_capacity(results.len());
        for (res, ckpt) in results {
            if let Some(c) = ckpt {
                checkpoints.push((method, res.seed, c));
            }
            seeds.push(res);
        }
        methods.push(MethodReport::new(method, seeds));
    }
    Ok(Experiment {
        report: RunReport {
            schema_version: SCHEMA_VERSION,
            dataset: cfg.dataset.clone(),
            dataset_hash: ds.content_hash(),
            dataset_stats: ds.stats(),
            std_formula: STD_FORMULA.into(),
            accuracy_protocol: ACCURACY_PROTOCOL.into(),
            config: cfg.clone(),
            methods,
        },
        checkpoints,
    })
}

/// Loads the configured dataset, runs it, and writes outputs when `out` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let exp = run_on(&ds, cfg)?;
    if let Some(out) = &cfg.out {
        exp.write(out)?;
    }
    Ok(exp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub schema_version: u32,
    pub dataset: String,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub ff_epoch_ms: f64,
    pub bp_epoch_ms: f64,
    /// `bp_epoch_ms / ff_epoch_ms`; above 1 means FF trains faster per epoch.
    pub speedup: f64,
    pub ff_peak_activations: usize,
    pub bp_peak_activations: usize,
    pub reference_speedup: Option<f64>,
    pub reference_note: String,
}

/// Times FF and BP one after the other on the first seed, so the two
/// measurements do not compete for cores.
pub fn bench_on(ds: &Dataset, cfg: &ExperimentConfig) -> Result<SpeedReport> {
    cfg.validate()?;
    if cfg.method != Method::Both {
        return Err(GffError::Config(
            "speed comparison needs method \"both\"".into(),
        ));
    }
    let seed = cfg.seeds[0];
    let sp = split(ds, cfg.fractions(), seed)?;
    let tc = cfg.train_config();
    let (_, ff) = train(ds, &sp, &tc, seed)?;
    let (_, bp) = train_bp(ds, &sp, &tc, seed)?;
    let (ff_ms, bp_ms) = (ff.mean_epoch_ms(), bp.mean_epoch_ms());
    Ok(SpeedReport {
        schema_version: SCHEMA_VERSION,
        dataset: cfg.dataset.clone(),
        seed,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        schedule: cfg.schedule,
        ff_epoch_ms: ff_ms,
        bp_epoch_ms: bp_ms,
        speedup: bp_ms / ff_ms,
        ff_peak_activations: ff.peak_activations,
        bp_peak_activations: bp.peak_activations,
        reference_speedup: reference_speedup(&cfg.dataset),
        reference_note:
            "published factors were measured on a different software stack; context only".into(),
    })
}

pub fn bench_speed(cfg: &ExperimentConfig) -> Result<SpeedReport> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    let report = bench_on(&ds, cfg)?;
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out).map_err(|e| GffError::io(out, e))?;
        let path = out.join("speed.json");
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| GffError::Config(e.to_string()))?;
        fs::write(&path, json).map_err(|e| GffError::io(&path, e))?;
    }
    Ok(report)
}

pub fn inspect_dataset(dir: impl AsRef<Path>, name: &str) -> Result<DatasetStats> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(GffError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    Ok(parse_tu(dir, name)?.stats())
}

/// Accuracy of a checkpoint on the test split it was trained with.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, data_dir: Option<&Path>) -> Result<f64> {
    let dir = data_dir.unwrap_or(&ckpt.data_dir).join(&ckpt.dataset);
    let ds = parse_tu(&dir, &ckpt.dataset)?;
    if ds.content_hash() != ckpt.dataset_hash {
        return Err(GffError::Checkpoint(format!(
            "dataset at {} differs from the one the checkpoint was trained on",
            dir.display()
        )));
    }
    let [a, b, c] = ckpt.fractions;
    let sp = split(&ds, (a, b, c), ckpt.seed)?;
    match &ckpt.model {
        TrainedModel::Gff(m) => evaluate(m, &ds, &sp.test),
        TrainedModel::Bp(m) => evaluate_bp(m, &ds, &sp.test),
    }
}
