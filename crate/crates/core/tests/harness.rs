mod common;

use common::*;
use gff_core::harness::{
    bench_speed, evaluate_checkpoint, inspect_dataset, run_experiment, run_on, ExperimentConfig,
    Method, SeedStatus, CSV_HEADER,
};
use gff_core::{parse_tu, Checkpoint, GffError};

fn quick(dataset: &str, dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: dataset.into(),
        data_dir: dir.to_path_buf(),
        seeds: vec![0, 1],
        epochs: 4,
        batch_size: 16,
        hidden: 8,
        ..ExperimentConfig::default()
    }
}

fn without_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols.remove(7);
            cols.join(",")
        })
        .collect()
}

#[test]
fn tu_round_trip_preserves_content() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic_dataset(1, 25, 3);
    let sub = dir.path().join("SYNTH");
    std::fs::create_dir_all(&sub).unwrap();
    ds.write_tu(&sub, "SYNTH").unwrap();
    let back = parse_tu(&sub, "SYNTH").unwrap();
    assert_eq!(back.graphs, ds.graphs);
    assert_eq!(back.content_hash(), ds.content_hash());
    assert_eq!(inspect_dataset(&sub, "SYNTH").unwrap(), ds.stats());
}

#[test]
fn experiment_writes_reports_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic_dataset(2, 40, 3);
    let sub = dir.path().join("SYNTH");
    std::fs::create_dir_all(&sub).unwrap();
    ds.write_tu(&sub, "SYNTH").unwrap();

    let out = dir.path().join("out");
    let cfg = ExperimentConfig {
        out: Some(out.clone()),
        ..quick("SYNTH", dir.path())
    };
    let exp = run_experiment(&cfg).unwrap();
    let report = &exp.report;
    assert_eq!(report.schema_version, 1);
    assert!(report.std_formula.starts_with("population"));
    for m in [Method::Ff, Method::Bp] {
        let mr = report.method(m).unwrap();
        assert_eq!(mr.finished, 2);
        assert!(mr.mean_accuracy.is_some() && mr.std_accuracy.is_some());
        assert!(mr.seeds.iter().all(|s| s.epoch_losses.len() == 4));
    }

    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), 5);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["epochs"], 4);
    assert_eq!(json["dataset_hash"], ds.content_hash());

    // The echoed config reruns to the same accuracies.
    let echoed: ExperimentConfig = serde_json::from_value(json["config"].clone()).unwrap();
    let again = run_experiment(&ExperimentConfig {
        out: None,
        ..echoed
    })
    .unwrap();
    assert_eq!(without_timing(&again.report.csv()), without_timing(&csv));

    // Each checkpoint re-evaluates to the reported accuracy.
    for m in ["ff", "bp"] {
        let ckpt =
            Checkpoint::load(out.join("checkpoints").join(format!("{m}-seed1.json"))).unwrap();
        let acc = evaluate_checkpoint(&ckpt, None).unwrap();
        let method = if m == "ff" { Method::Ff } else { Method::Bp };
        let reported = report.method(method).unwrap().seeds[1]
            .test_accuracy
            .unwrap();
        assert_eq!(acc, reported);
    }
}

#[test]
fn diverged_seeds_are_recorded_and_run_continues() {
    let ds = synthetic_dataset(3, 30, 3);
    let cfg = ExperimentConfig {
        lr: 1e200,
        ..quick("SYNTH", std::path::Path::new("."))
    };
    let exp = run_on(&ds, &cfg).unwrap();
    for mr in &exp.report.methods {
        assert!(mr.diverged());
        assert_eq!(mr.finished, 0);
        assert!(mr
            .seeds
            .iter()
            .all(|s| s.status == SeedStatus::Failed && s.error.is_some()));
    }
    assert!(exp.checkpoints.is_empty());
    assert!(exp.report.csv().lines().nth(1).unwrap().contains(",,"));
}

#[test]
fn empty_seed_list_and_missing_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        seeds: vec![],
        ..quick("SYNTH", dir.path())
    };
    assert!(matches!(run_experiment(&cfg), Err(GffError::Config(_))));
    assert!(matches!(
        run_experiment(&quick("ABSENT", dir.path())),
        Err(GffError::Io { .. })
    ));
}

#[test]
fn speed_report_compares_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic_dataset(4, 40, 3);
    let sub = dir.path().join("SYNTH");
    std::fs::create_dir_all(&sub).unwrap();
    ds.write_tu(&sub, "SYNTH").unwrap();
    let r = bench_speed(&quick("SYNTH", dir.path())).unwrap();
    assert!(r.ff_epoch_ms > 0.0 && r.bp_epoch_ms > 0.0);
    assert!((r.speedup - r.bp_epoch_ms / r.ff_epoch_ms).abs() < 1e-12);
    assert!(r.ff_peak_activations < r.bp_peak_activations);
    assert_eq!(r.reference_speedup, None);

    let ff_only = ExperimentConfig {
        method: Method::Ff,
        ..quick("SYNTH", dir.path())
    };
    assert!(matches!(bench_speed(&ff_only), Err(GffError::Config(_))));
}
