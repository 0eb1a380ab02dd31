use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cloud_core::model::{Model, ModelConfig};
use cloud_core::train::load_checkpoint;
use tempfile::TempDir;

const CONFIG: &str = "seed = 3\noutput_dir = \"runs\"\n[data]\ndir = \"data\"\n";

fn cloud(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloud"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(["--config", "cfg.toml"])
        .args(args)
        .output()
        .expect("spawn cloud")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cloud(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    cloud(dir, args).status.code().expect("exit code")
}

/// Workspace with preprocessed data and an index.
fn prepared() -> TempDir {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("cfg.toml"), CONFIG).unwrap();
    ok(tmp.path(), &["synth", "--out", "events.tsv"]);
    ok(tmp.path(), &["preprocess", "--events", "events.tsv"]);
    ok(tmp.path(), &["build-index"]);
    tmp
}

fn content_hash(path: PathBuf) -> String {
    let text = fs::read_to_string(path).unwrap();
    let first = text.lines().next().unwrap();
    let header: serde_json::Value = if first.trim() == "{" {
        serde_json::from_str(&text).unwrap()
    } else {
        serde_json::from_str(first).unwrap()
    };
    header["content_sha256"].as_str().unwrap().to_string()
}

/// Frozen from a reference run of the same config.
#[test]
fn preprocess_outputs_have_stable_checksums() {
    let tmp = prepared();
    let data = tmp.path().join("data");
    let got: Vec<String> = ["sequences.jsonl", "vocab.json", "neighbors.jsonl", "negatives.jsonl"]
        .iter()
        .map(|f| content_hash(data.join(f)))
        .collect();
    let golden = [
        "0e1dcc8950faff1af595b9968a714bcba6f3ce64e52c5f9c04051d6125eab0c7",
        "4078c01f3fe33c83fe1d5bcc1c4a84e9c5ba137be6aae0a8f9ab7276c81ca297",
        "aa2b8f15208f4ba65a83031ba0f1b35099f8eacf995adf34ef1c7ded287a9026",
        "d0b5f61f912081761af29b4bcf8687a70de65d59cb48312bce2e88064b37743c",
    ];
    assert_eq!(got, golden);
}

#[test]
fn zero_epoch_training_saves_the_initialisation_and_evaluation_repeats() {
    let tmp = prepared();
    let dir = tmp.path();
    ok(dir, &["train", "--epochs", "0"]);
    let ck = load_checkpoint(&dir.join("runs/checkpoint")).unwrap();
    assert_eq!(ck.epoch, 0);
    let init = Model::new(ModelConfig::new(50), 3).unwrap();
    assert_eq!(ck.model.params, init.params);

    let first = ok(dir, &["evaluate", "--report", "a.json"]);
    let second = ok(dir, &["evaluate", "--report", "b.json"]);
    assert_eq!(first, second);
    assert_eq!(fs::read(dir.join("a.json")).unwrap(), fs::read(dir.join("b.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("a.json")).unwrap()).unwrap();
    assert!(report["metadata"]["config_hash"].is_string());
    assert!(report["sum"].as_f64().unwrap() > 0.0);
}

#[test]
fn robustness_chain_runs_from_a_checkpoint() {
    let tmp = prepared();
    let dir = tmp.path();
    ok(dir, &["train", "--epochs", "0"]);
    ok(dir, &["simulate-noise", "--out", "sim"]);
    ok(dir, &["robustness", "--simulated", "sim", "--report", "r.json"]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("r.json")).unwrap()).unwrap();
    for key in ["sum", "sum_real", "dist"] {
        assert!(report["robustness"][key].is_number(), "missing {key}");
    }
    ok(dir, &["modify", "--out", "m.jsonl"]);
    assert!(fs::read_to_string(dir.join("m.jsonl")).unwrap().lines().count() > 200);
}

#[test]
fn failure_categories_have_distinct_exit_codes() {
    let tmp = prepared();
    let dir = tmp.path();
    let missing = code(dir, &["build-index", "--data", "nowhere"]);

    fs::write(dir.join("bad.toml"), "seeed = 1\n").unwrap();
    let bad_config = Command::new(env!("CARGO_BIN_EXE_cloud"))
        .current_dir(dir)
        .args(["--config", "bad.toml", "build-index"])
        .output()
        .unwrap()
        .status
        .code()
        .unwrap();

    let vocab = dir.join("data/vocab.json");
    let text = fs::read_to_string(&vocab).unwrap();
    fs::write(&vocab, text.replacen("\"format_version\": 1", "\"format_version\": 99", 1)).unwrap();
    let version = code(dir, &["build-index"]);
    fs::write(&vocab, text).unwrap();

    ok(dir, &["train", "--epochs", "0"]);
    let blob = dir.join("runs/checkpoint/params.bin");
    let mut bytes = fs::read(&blob).unwrap();
    bytes[0] ^= 1;
    fs::write(&blob, bytes).unwrap();
    let integrity = code(dir, &["evaluate"]);

    let codes = [missing, bad_config, version, integrity];
    assert!(codes.iter().all(|&c| c != 0), "{codes:?}");
    let mut unique = codes.to_vec();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), codes.len(), "{codes:?}");
}
