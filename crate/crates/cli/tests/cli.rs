use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qsalab::data::{Records, SequenceDataset};
use qsalab::linalg::CMatrix;
use qsalab::trainer::{Checkpoint, ModelKind, ModelParams, ModelShape, TrainConfig};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn qsalab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsalab"))
        .current_dir(dir)
        .args(args)
        .env_remove("QSALAB_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = qsalab(dir, args);
    assert!(out.status.success(), "qsalab {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    qsalab(dir, args).status.code().expect("exit code")
}

fn golden_header(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.header"));
    std::fs::read_to_string(p).unwrap()
}

fn first_line(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    format!("{}\n", text.lines().next().unwrap())
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn classical(dir: &Path, name: &str, seed: &str) {
    ok(dir, &["generate", "--kind", "classical", "--vocab", "6", "--len", "3", "--count", "12", "--seed", seed, "--process-seed", "1", "--out", name]);
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["--version"]), 0);
    assert_eq!(code(d, &[]), 2);
    assert_eq!(code(d, &["frobnicate"]), 2);
    assert_eq!(code(d, &["generate", "--kind", "classical", "--vocab", "10", "--len", "5", "--count", "3", "--seed", "7"]), 2);
    assert_eq!(code(d, &["generate", "--kind", "quantum", "--qubits", "2", "--vocab", "5", "--len", "3", "--count", "2", "--seed", "1", "--out", "q.jsonl"]), 2);
    assert_eq!(code(d, &["generate", "--kind", "classical", "--len", "3", "--count", "2", "--seed", "1", "--out", "c.jsonl"]), 2);
    assert_eq!(code(d, &["train", "--data", "c.jsonl", "--out", "run"]), 2);
    assert!(std::fs::read_dir(d).unwrap().next().is_none(), "usage errors must not write files");
}

#[test]
fn generate_writes_datasets_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--kind", "classical", "--vocab", "10", "--len", "5", "--count", "300", "--seed", "7", "--out", "d.jsonl"]);
    let ds = SequenceDataset::read_jsonl(std::fs::read(d.join("d.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!((ds.len(), ds.vocab, ds.seq_len), (300, 10, 4));
    let header: Value = serde_json::from_str(std::fs::read_to_string(d.join("d.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["kind"], "classical");

    ok(d, &["generate", "--kind", "quantum", "--qubits", "4", "--len", "5", "--count", "300", "--seed", "7", "--out", "q.jsonl"]);
    let q = SequenceDataset::read_jsonl(std::fs::read(d.join("q.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!(q.vocab, 16);
    let Records::Quantum(rs) = &q.records else { panic!("quantum records expected") };
    for step in rs.iter().flatten() {
        assert!((step.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    let manifest = read_json(&d.join("q.jsonl.manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 7);
    let digest = hex::encode(Sha256::digest(std::fs::read(d.join("q.jsonl")).unwrap()));
    assert_eq!(manifest["outputs"][0]["sha256"], digest);
    for key in ["tool_version", "config", "inputs", "wall_time_seconds"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    classical(d, "train.jsonl", "2");
    for k in 0..5 {
        classical(d, &format!("test{k}.jsonl"), &(10 + k).to_string());
    }
    for model in ["qsa", "lcsa", "scsa"] {
        ok(d, &["train", "--model", model, "--data", "train.jsonl", "--epochs", "4", "--test", "test0.jsonl", "--test", "test1.jsonl", "--out", model]);
        let run = d.join(model);
        assert_eq!(first_line(&run.join("loss.csv")), golden_header("loss.csv"));
        let csv = std::fs::read_to_string(run.join("loss.csv")).unwrap();
        let epochs: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(epochs, vec![1, 2, 3, 4]);
        let report = read_json(&run.join("report.json"));
        assert_eq!(report["model_kind"], model);
        assert_eq!(report["test"]["sets"].as_array().unwrap().len(), 2);
        let manifest = read_json(&run.join("manifest.json"));
        let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
        assert_eq!(outputs.len(), 3);
        for o in manifest["outputs"].as_array().unwrap() {
            let bytes = std::fs::read(d.join(o["path"].as_str().unwrap())).unwrap();
            assert_eq!(o["sha256"], hex::encode(Sha256::digest(bytes)));
        }
    }

    let tests: Vec<String> = (0..5).map(|k| format!("test{k}.jsonl")).collect();
    let mut args = vec!["eval", "--checkpoint", "qsa/checkpoint.json", "--data"];
    args.extend(tests.iter().map(String::as_str));
    args.extend(["--out", "eval.json"]);
    ok(d, &args);
    let eval = read_json(&d.join("eval.json"));
    let ppl: Vec<f64> = eval["sets"].as_array().unwrap().iter().map(|s| s["perplexity"].as_f64().unwrap()).collect();
    assert_eq!(ppl.len(), 5);
    let mean = ppl.iter().sum::<f64>() / 5.0;
    let sd = (ppl.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert!((eval["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((eval["stdev"].as_f64().unwrap() - sd).abs() < 1e-12);

    ok(d, &["predict", "--checkpoint", "scsa/checkpoint.json", "--data", "test0.jsonl", "--top-k", "2", "--out", "pred.csv"]);
    assert_eq!(first_line(&d.join("pred.csv")), golden_header("predict.csv"));
    assert_eq!(std::fs::read_to_string(d.join("pred.csv")).unwrap().lines().count(), 1 + 12 * 2 * 2);
}

#[test]
fn default_training_run_writes_one_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    classical(d, "train.jsonl", "4");
    ok(d, &["train", "--model", "qsa", "--data", "train.jsonl", "--out", "run"]);
    let csv = std::fs::read_to_string(d.join("run/loss.csv")).unwrap();
    let epochs: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(epochs, (1..=100).collect::<Vec<_>>());
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0")), "seconds column is zero without --timing");
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    classical(d, "train.jsonl", "3");
    std::fs::write(d.join("cfg.json"), json!({"model_kind": "lcsa", "epochs": 2, "seed": 9, "learning_rate": 0.02}).to_string()).unwrap();
    ok(d, &["train", "--config", "cfg.json", "--data", "train.jsonl", "--epochs", "3", "--out", "run"]);
    let ckpt = Checkpoint::from_json(&std::fs::read_to_string(d.join("run/checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ckpt.model_kind, ModelKind::Lcsa);
    assert_eq!((ckpt.config.epochs, ckpt.config.seed, ckpt.config.learning_rate), (3, 9, 0.02));
    assert_eq!(std::fs::read_to_string(d.join("run/loss.csv")).unwrap().lines().count(), 4);

    std::fs::write(d.join("bad.json"), json!({"model_kind": "lcsa", "learning_rate": -1.0}).to_string()).unwrap();
    assert_eq!(code(d, &["train", "--config", "bad.json", "--data", "train.jsonl", "--out", "bad"]), 2);
    std::fs::write(d.join("typo.json"), json!({"model_kind": "lcsa", "epoch": 3}).to_string()).unwrap();
    assert_ne!(code(d, &["train", "--config", "typo.json", "--data", "train.jsonl", "--out", "typo"]), 0);
    assert!(!d.join("bad").exists() && !d.join("typo").exists());
}

#[test]
fn compatibility_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    classical(d, "train.jsonl", "3");
    ok(d, &["generate", "--kind", "classical", "--vocab", "7", "--len", "3", "--count", "4", "--seed", "1", "--out", "other.jsonl"]);
    ok(d, &["train", "--model", "lcsa", "--data", "train.jsonl", "--epochs", "1", "--out", "run"]);
    assert_eq!(code(d, &["eval", "--checkpoint", "run/checkpoint.json", "--data", "other.jsonl", "--out", "e.json"]), 4);
    assert_eq!(code(d, &["predict", "--checkpoint", "run/checkpoint.json", "--data", "other.jsonl", "--out", "p.csv"]), 4);

    let mut ckpt = read_json(&d.join("run/checkpoint.json"));
    ckpt["version"] = json!(99);
    std::fs::write(d.join("future.json"), ckpt.to_string()).unwrap();
    assert_eq!(code(d, &["eval", "--checkpoint", "future.json", "--data", "train.jsonl", "--out", "e.json"]), 4);

    std::fs::write(d.join("broken.jsonl"), "{\"kind\": \"classical\"}\n").unwrap();
    assert_eq!(code(d, &["train", "--model", "qsa", "--data", "broken.jsonl", "--out", "x"]), 1);
    assert_eq!(code(d, &["train", "--model", "qsa", "--data", "missing.jsonl", "--out", "x"]), 1);
    assert!(!d.join("e.json").exists() && !d.join("p.csv").exists() && !d.join("x").exists());
}

#[test]
fn numeric_failure_exits_3_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    classical(d, "train.jsonl", "3");
    let args = ["train", "--model", "scsa", "--data", "train.jsonl", "--epochs", "3", "--learning-rate", "1e308", "--out", "run"];
    assert_eq!(code(d, &args), 3);
    let diag = read_json(&d.join("run/diagnostic.json"));
    assert!(diag["error"].as_str().unwrap().contains("non-finite"));
    assert!(!d.join("run/checkpoint.json").exists());
    assert!(std::fs::read_dir(d.join("run")).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

#[test]
fn predict_top_one_is_the_attended_token() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let records = vec![vec![0, 1, 2, 3, 0], vec![2, 2, 1, 0, 3], vec![3, 1, 1, 2, 0]];
    let ds = SequenceDataset::new(8, 4, 0, json!({"name": "fixture"}), Records::Classical(records.clone())).unwrap();
    std::fs::write(d.join("fixture.jsonl"), ds.to_jsonl_string()).unwrap();

    let cfg = TrainConfig { gamma: 0.0, ..TrainConfig::for_model(ModelKind::Lcsa) };
    let shape = ModelShape::from_config(&cfg, &ds).unwrap();
    let mut params = ModelParams::init(shape, 0).unwrap();
    let one = |r: usize, c: usize| num_complex::Complex::new(if r == c { 1.0 } else { 0.0 }, 0.0);
    params.set_matrix("embedding", &CMatrix::from_fn(4, 8, one)).unwrap();
    params.set_matrix("v_mat", &CMatrix::from_fn(4, 4, one)).unwrap();
    params.set_matrix("w_mat", &CMatrix::from_fn(4, 4, one)).unwrap();
    std::fs::write(d.join("ckpt.json"), Checkpoint::new(&params, &cfg).to_json()).unwrap();

    ok(d, &["predict", "--checkpoint", "ckpt.json", "--data", "fixture.jsonl", "--top-k", "1", "--out", "pred.csv"]);
    let csv = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (r, j, word): (usize, usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[3].parse().unwrap());
        assert_eq!(word, records[r][j - 1], "{line}");
        assert!((f[4].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn audit_tables_have_locked_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["audit", "--out", "audit"]);
    for name in ["terms.csv", "crossover.csv", "slopes.csv"] {
        assert_eq!(first_line(&d.join("audit").join(name)), golden_header(name), "{name}");
    }
    let slopes = std::fs::read_to_string(d.join("audit/slopes.csv")).unwrap();
    assert!(slopes.lines().skip(1).all(|l| l.ends_with(",true")), "{slopes}");
    assert_eq!(code(d, &["audit", "--t-values", "0,4", "--out", "bad"]), 2);
}
