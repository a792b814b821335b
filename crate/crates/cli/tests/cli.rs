use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn teamdims(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teamdims"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let out = teamdims(dir, &full);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small prepared corpus with an rf artifact trained on it.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--spec",
            "COD=8,MPM=8,CCF=8,TES=8,NONE=8",
            "--seed",
            "3",
            "--out",
            "raw.jsonl",
        ],
    );
    ok(d, &["preprocess", "--in", "raw.jsonl", "--out", "pre.jsonl"]);
    ok(
        d,
        &[
            "train",
            "--model",
            "rf",
            "--in",
            "pre.jsonl",
            "--out",
            "rf",
            "--n-trees",
            "20",
        ],
    );
    dir
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = teamdims(dir.path(), &["train", "--model", "svm"]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&teamdims(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&teamdims(dir.path(), &["--help"])), 0);
}

#[test]
fn validation_errors_exit_1() {
    let dir = workspace();
    let d = dir.path();
    let missing = teamdims(d, &["evaluate", "--model", "rf", "--test", "absent.jsonl"]);
    assert_eq!(code(&missing), 1);
    let raw = teamdims(d, &["featurize", "--in", "raw.jsonl", "--out", "f.jsonl"]);
    assert_eq!(code(&raw), 1);
    assert!(stderr(&raw).contains("preprocess"), "{}", stderr(&raw));
    let untrained = teamdims(d, &["train", "--model", "rf", "--in", "raw.jsonl", "--out", "rf2"]);
    assert_eq!(code(&untrained), 1);
    let same = teamdims(d, &["preprocess", "--in", "raw.jsonl", "--out", "./raw.jsonl"]);
    assert_eq!(code(&same), 1);
    assert!(stderr(&same).contains("overwrite an input"));
    let no_val = teamdims(
        d,
        &["train", "--model", "transformer", "--in", "pre.jsonl", "--out", "tr"],
    );
    assert_eq!(code(&no_val), 1);
    let bad_flip = teamdims(d, &["synth", "--spec", "COD=1", "--flip-b", "1.5", "--out", "x.jsonl"]);
    assert_eq!(code(&bad_flip), 1);
}

#[test]
fn inputs_are_never_modified() {
    let dir = workspace();
    let d = dir.path();
    let before = fs::read(d.join("pre.jsonl")).unwrap();
    ok(d, &["featurize", "--in", "pre.jsonl", "--out", "feat.jsonl"]);
    ok(d, &["split", "--in", "pre.jsonl"]);
    ok(
        d,
        &["evaluate", "--model", "rf", "--test", "pre.jsonl", "--out", "eval.json"],
    );
    assert_eq!(fs::read(d.join("pre.jsonl")).unwrap(), before);
}

#[test]
fn predict_text_schema() {
    let dir = workspace();
    let out = teamdims(dir.path(), &["predict", "--model", "rf", "--text", "omg we r done :)"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["prepared"], "oh my goodness we are done {{pos_emo}}");
    for dim in ["COD", "MPM", "CCF", "TES"] {
        let s = v["scores"][dim].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&s));
        let l = v["labels"][dim].as_u64().unwrap();
        assert_eq!(l, u64::from(s >= 0.5));
    }
    assert_eq!(v["model"], "rf");
}

#[test]
fn predict_file_writes_jsonl() {
    let dir = workspace();
    let d = dir.path();
    ok(
        d,
        &["predict", "--model", "rf", "--in", "raw.jsonl", "--out", "preds.jsonl"],
    );
    let text = fs::read_to_string(d.join("preds.jsonl")).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r["id"].is_string() && r["labels"]["TES"].is_u64()));
    assert!(d.join("preds.jsonl.manifest.json").exists());
}

#[test]
fn evaluate_reports_provenance_and_manifest() {
    let dir = workspace();
    let d = dir.path();
    let v = ok(d, &["evaluate", "--model", "rf", "--test", "pre.jsonl"]);
    assert_eq!(v["n_messages"], 40);
    assert!(v["macro_f1"].as_f64().unwrap() > 0.9);
    assert_eq!(v["provenance"]["model"], "rf");
    assert!(v["provenance"]["test_sha256"].as_str().unwrap().len() == 64);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.join("rf/manifest.json")).unwrap()).unwrap();
    assert!(manifest["command"].as_array().unwrap().iter().any(|a| a == "train"));
    assert!(manifest["inputs"]
        .as_object()
        .unwrap()
        .keys()
        .any(|k| k.ends_with("pre.jsonl")));
}

#[test]
fn locked_artifact_directory_is_refused() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("rf/.teamdims.lock"), "1").unwrap();
    let out = teamdims(d, &["train", "--model", "rf", "--in", "pre.jsonl", "--out", "rf"]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("locked"), "{}", stderr(&out));
    fs::remove_file(d.join("rf/.teamdims.lock")).unwrap();
    ok(d, &["train", "--model", "rf", "--in", "pre.jsonl", "--out", "rf"]);
    assert!(!d.join("rf/.teamdims.lock").exists());
}

#[test]
fn retraining_with_other_features_replaces_artifact() {
    let dir = workspace();
    let d = dir.path();
    let v = ok(
        d,
        &[
            "train",
            "--model",
            "rf",
            "--in",
            "pre.jsonl",
            "--out",
            "rf",
            "--features",
            "on",
            "--n-trees",
            "5",
        ],
    );
    assert_eq!(v["features"], true);
    ok(
        d,
        &[
            "train",
            "--model",
            "rf",
            "--in",
            "pre.jsonl",
            "--out",
            "rf",
            "--features",
            "off",
            "--n-trees",
            "5",
        ],
    );
    let e = ok(d, &["evaluate", "--model", "rf", "--test", "pre.jsonl"]);
    assert_eq!(e["provenance"]["features"], false);
}

#[test]
fn mismatched_lexicon_is_rejected() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("names.txt"), "Zed\n").unwrap();
    ok(
        d,
        &[
            "preprocess",
            "--in",
            "raw.jsonl",
            "--out",
            "other.jsonl",
            "--roster",
            "names.txt",
        ],
    );
    let out = teamdims(d, &["evaluate", "--model", "rf", "--test", "other.jsonl"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("fingerprint"), "{}", stderr(&out));
}

#[test]
fn config_file_supplies_paths() {
    let dir = workspace();
    let d = dir.path();
    fs::write(
        d.join("teamdims.toml"),
        "features = \"on\"\n[paths]\ncorpus = \"raw.jsonl\"\n[split]\nseed = 4\nratios = [0.5, 0.25, 0.25]\n",
    )
    .unwrap();
    let v = ok(d, &["--config", "teamdims.toml", "split"]);
    assert_eq!(v["sizes"]["train"], 20);
    let bad = teamdims(d, &["--config", "absent.toml", "split"]);
    assert_eq!(code(&bad), 1);
    fs::write(d.join("bad.toml"), "unknown_key = 1\n").unwrap();
    assert_eq!(code(&teamdims(d, &["--config", "bad.toml", "split"])), 1);
}

#[test]
fn agreement_between_annotators() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--spec",
            "COD=10,MPM=10,CCF=10,TES=10",
            "--flip-b",
            "0",
            "--out",
            "u.jsonl",
        ],
    );
    let v = ok(d, &["agreement", "--unseen", "u.jsonl"]);
    assert_eq!(v["kappa_pooled"], 1.0);
    assert_eq!(v["mode"], "annotators");
}
