use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gff"))
        .args(args)
        .output()
        .unwrap()
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn inspect_prints_dataset_statistics() {
    let dir = data_dir().join("MUTAG");
    let o = gff(&["inspect", "--dir", dir.to_str().unwrap(), "--name", "MUTAG"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("188 graphs, 2 labels, avg nodes 17.93"));
}

#[test]
fn inspect_missing_directory_fails() {
    let o = gff(&["inspect", "--dir", "/nonexistent/gff", "--name", "X"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("i/o error"));
}

#[test]
fn flags_override_config_file_and_eval_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.json");
    let out = tmp.path().join("out");
    let data = data_dir();
    std::fs::write(
        &config,
        serde_json::json!({
            "dataset": "MUTAG",
            "data_dir": data,
            "method": "both",
            "seeds": [0, 1],
            "epochs": 50,
            "hidden": 8,
        })
        .to_string(),
    )
    .unwrap();
    let o = gff(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--epochs",
        "3",
        "--pooling",
        "mean",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["epochs"], 3);
    assert_eq!(report["config"]["hidden"], 8);
    assert_eq!(report["config"]["pooling"], "mean");
    assert_eq!(report["config"]["batch_size"], 128);

    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("MUTAG,bp,")).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[5], "0");

    let ckpt = out.join("checkpoints").join("bp-seed0.json");
    let o = gff(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let acc: f64 = cols[6].parse().unwrap();
    assert!(
        stdout(&o).contains(&format!("test accuracy {acc:.4}")),
        "{}",
        stdout(&o)
    );
}

#[test]
fn config_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.json");
    std::fs::write(&config, r#"{"seeds": []}"#).unwrap();
    let o = gff(&["train", "--config", config.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("seed list is empty"));

    let o = gff(&["train", "--goodness", "cube-pool"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sq-pool-mean"));
}
