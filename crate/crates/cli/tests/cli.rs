//! End-to-end checks of the binary: exit codes, error format, and a small
//! pipeline pass through every subcommand.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trawlnet"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "trawlnet {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn unknown_flag_exits_2_with_usage() {
    let out = bin().args(["gen", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage:"), "no usage text in {stderr:?}");
}

#[test]
fn missing_subcommand_exits_2() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flag_value_exits_2() {
    let out = bin().args(["gen", "--out", "x", "--counts", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["train", "--data", "x", "--out", "y", "--arch", "resnet", "--split", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn module_errors_exit_1_on_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["split", "--data", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim_end().lines().count(), 1, "multi-line error: {stderr:?}");
    assert!(stderr.starts_with("trawlnet split:"), "unqualified error: {stderr:?}");
}

#[test]
fn strict_paper_rejects_overrides() {
    let out = bin()
        .args([
            "train", "--data", "x", "--out", "y", "--arch", "spatial", "--split", "0",
            "--strict-paper", "--epochs", "3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--strict-paper"), "wrong error: {stderr:?}");
}

#[test]
fn split_infeasible_counts_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    run_ok(&["gen", "--out", ds.to_str().unwrap(), "--counts", "2,2,2", "--seed", "9"]);
    let out = bin()
        .args([
            "split", "--data", ds.to_str().unwrap(),
            "--train-counts", "5,5,5", "--val-counts", "1,1,1", "--test-counts", "1,1,1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("split infeasible"), "wrong error: {stderr:?}");
}

fn probs_sum_to_one(report: &serde_json::Value) {
    for pred in report["predictions"].as_array().unwrap() {
        let sum: f64 = pred["probs"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "probs sum {sum}");
    }
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_smoke_runs_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let ds = root.join("ds");
    let run = root.join("run");
    let s = |p: &Path| p.to_str().unwrap().to_string();

    run_ok(&["gen", "--out", &s(&ds), "--counts", "5,5,5", "--seed", "1"]);
    assert!(ds.join("manifest.csv").is_file());
    assert!(ds.join("gen-config.json").is_file());

    run_ok(&[
        "split", "--data", &s(&ds), "--n-splits", "2", "--seed", "1",
        "--train-counts", "3,3,3", "--val-counts", "1,1,1", "--test-counts", "1,1,1",
    ]);
    assert!(ds.join("splits/split_02.json").is_file());

    run_ok(&[
        "train", "--data", &s(&ds), "--out", &s(&run), "--arch", "spatial", "--split", "1",
        "--epochs", "2", "--image-size", "32", "--seed", "1",
    ]);
    for f in ["run.json", "config.json", "hyper.ini", "model.ckpt", "history.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    run_ok(&["eval", "--run", &s(&run)]);
    let eval_path = run.join("eval-test-split01.json");
    let report = read_json(&eval_path);
    assert_eq!(report["n_clips"], 3);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    probs_sum_to_one(&report);

    let clip = report["predictions"][0]["clip_id"].as_str().unwrap().to_string();
    let exp = root.join("exp");
    run_ok(&["explain", "--run", &s(&run), "--clip", &clip, "--out", &s(&exp)]);
    assert!(exp.join("overlay-00.png").is_file());
    assert!(exp.join("map-mean.f64").is_file());
    assert!(exp.join("explain.json").is_file());

    let aud = root.join("aud");
    run_ok(&[
        "audit", "--data", &s(&ds), "--evals", &s(&run), "--out", &s(&aud),
        "--perms", "20", "--seed", "1",
    ]);
    let audit = read_json(&aud.join("audit.json"));
    assert!(audit["view_bias"].is_object());
    assert!(audit["adjacency"].is_object());
    assert!(audit["padding"].is_null());
    assert!(aud.join("audit-config.json").is_file());

    let fig = root.join("fig");
    run_ok(&[
        "report", "--out", &s(&fig), "--run", &s(&run), "--audit", &s(&aud), "--data", &s(&ds),
    ]);
    for f in ["curves-run.png", "view-heatmaps.png", "agreement.png", "adjacency.png"] {
        assert!(fig.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn eval_is_identical_across_repeat_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let ds = root.join("ds");
    run_ok(&["gen", "--out", &s(&ds), "--counts", "3,3,3", "--seed", "5"]);
    run_ok(&[
        "split", "--data", &s(&ds), "--n-splits", "1", "--seed", "5",
        "--train-counts", "1,1,1", "--val-counts", "1,1,1", "--test-counts", "1,1,1",
    ]);
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let run = root.join(name);
        run_ok(&[
            "train", "--data", &s(&ds), "--out", &s(&run), "--arch", "spatial", "--split", "1",
            "--epochs", "2", "--image-size", "32", "--seed", "7",
        ]);
        run_ok(&["eval", "--run", &s(&run)]);
        bytes.push(std::fs::read(run.join("eval-test-split01.json")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "repeat runs diverged");
}
