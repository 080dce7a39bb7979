//! `gff`: train, benchmark, inspect and evaluate GCNs trained with
//! Forward-Forward or backpropagation.
//!
//! Settings come from a JSON config file; any flag given on the command
//! line replaces the file's value, and fields absent from both take the
//! built-in defaults.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gff_core::harness::{
    bench_speed, evaluate_checkpoint, inspect_dataset, run_experiment, ExperimentConfig, Method,
};
use gff_core::{Checkpoint, EncodingMode, GoodnessOrdering, Pooling, Schedule};

#[derive(Parser)]
#[command(
    name = "gff",
    version,
    about = "Forward-Forward and backpropagation GCNs for graph classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train over all configured seeds and write report.json and summary.csv.
    Train(RunArgs),
    /// Compare FF and BP per-epoch time and retained activations.
    Bench(RunArgs),
    /// Print dataset statistics.
    Inspect {
        /// Directory holding the NAME_*.txt files.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Test accuracy of a saved checkpoint on the split it was trained with.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides the data directory recorded in the checkpoint.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse::<Method>)]
    method: Option<Method>,
    /// Comma-separated, e.g. 0,1,2,3,4.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_parser = parse::<EncodingMode>)]
    encoding: Option<EncodingMode>,
    #[arg(long, value_parser = parse::<GoodnessOrdering>)]
    goodness: Option<GoodnessOrdering>,
    #[arg(long, value_parser = parse::<Pooling>)]
    pooling: Option<Pooling>,
    #[arg(long, value_parser = parse::<Schedule>)]
    schedule: Option<Schedule>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse<T: std::str::FromStr<Err = gff_core::GffError>>(
    s: &str,
) -> std::result::Result<T, String> {
    s.parse().map_err(|e: gff_core::GffError| e.to_string())
}

impl RunArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),+) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })+
            };
        }
        set!(
            dataset, data_dir, method, seeds, epochs, batch_size, lr, threshold, encoding,
            goodness, pooling, schedule, hidden, layers
        );
        if self.out.is_some() {
            cfg.out = self.out;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn train(args: RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let exp = run_experiment(&cfg)?;
    let report = &exp.report;
    println!("{}", report.dataset_stats);
    for mr in &report.methods {
        match (mr.mean_accuracy, mr.std_accuracy) {
            (Some(m), Some(s)) => println!(
                "{}: test accuracy {m:.4} ± {s:.4} over {}/{} seeds, {:.2} ms/epoch, peak activations {}",
                mr.method,
                mr.finished,
                mr.seeds.len(),
                mr.mean_epoch_ms.unwrap_or(f64::NAN),
                mr.peak_activations.unwrap_or(0)
            ),
            _ => println!("{}: no seed finished", mr.method),
        }
        for s in mr.seeds.iter().filter(|s| s.error.is_some()) {
            eprintln!(
                "{} seed {} failed: {}",
                mr.method,
                s.seed,
                s.error.as_deref().unwrap_or("")
            );
        }
    }
    match &cfg.out {
        Some(out) => println!("wrote {}", out.display()),
        None => print!("{}", report.csv()),
    }
    Ok(())
}

fn bench(args: RunArgs) -> Result<()> {
    let mut cfg = args.resolve()?;
    cfg.method = Method::Both;
    let r = bench_speed(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}

fn inspect(dir: &Path, name: &str) -> Result<()> {
    let stats = inspect_dataset(dir, name)?;
    println!("{stats}");
    Ok(())
}

fn eval(checkpoint: &Path, data_dir: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let acc = evaluate_checkpoint(&ckpt, data_dir)
        .with_context(|| format!("evaluating {}", checkpoint.display()))?;
    println!(
        "{} seed {}: test accuracy {acc:.4}",
        ckpt.dataset, ckpt.seed
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => train(args),
        Command::Bench(args) => bench(args),
        Command::Inspect { dir, name } => inspect(&dir, &name),
        Command::Eval {
            checkpoint,
            data_dir,
        } => eval(&checkpoint, data_dir.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
