mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempaudit::corpus::{load_corpus, save_corpus};
use tempaudit::learners::TrainedModel;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tempaudit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value of `key` in key=value stdout records.
fn field(o: &Output, key: &str) -> Option<String> {
    stdout(o)
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")).map(str::to_string))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.jsonl");
    save_corpus(&common::small_corpus(9, 12), &path).unwrap();
    path
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn gen_presets_report_malware_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.jsonl");
    let o = run(&["gen", "--preset", "default", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.exists());
    assert_eq!(field(&o, "malware_ratio").unwrap(), "0.5000");
    assert_eq!(field(&o, "samples").unwrap(), "4400");

    let out = dir.path().join("a.jsonl");
    let o = run(&["gen", "--preset", "androzoo-ratio", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ratio: f64 = field(&o, "malware_ratio").unwrap().parse().unwrap();
    assert!((ratio - 0.173).abs() <= 0.005, "{ratio}");
    let corpus = load_corpus(&out).unwrap();
    assert!((corpus.malware_ratio() - ratio).abs() < 1e-4);
}

#[test]
fn gen_from_spec_and_invalid_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, serde_json::to_string(&common::small_spec(4, (2012, 2014), 5, 2)).unwrap()).unwrap();
    let out = dir.path().join("c.jsonl");
    let o = run(&["gen", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(field(&o, "samples").unwrap(), "30");

    let mut bad = common::small_spec(4, (2014, 2012), 5, 2);
    bad.per_cell_count = 0;
    fs::write(&spec, serde_json::to_string(&bad).unwrap()).unwrap();
    let o = run(&["gen", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let o = run(&["gen", "--preset", "default"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--out"));
    let o = run(&["crosstest", "--corpus", "c", "--train", "v9", "--test", "v4", "--model", "svm"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["gen", "--preset", "default", "--out", "x", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn every_subcommand_documents_its_flags() {
    let flags: &[(&str, &[&str])] = &[
        ("gen", &["--spec", "--preset", "--out", "--seed"]),
        ("variant", &["--corpus", "--variant", "--spec", "--per-year", "--out", "--seed"]),
        ("train", &["--corpus", "--model", "--variant", "--config", "--out", "--seed"]),
        ("audit", &["--corpus", "--config", "--out", "--jobs", "--seed"]),
        (
            "sweep",
            &["--corpus", "--config", "--model", "--malware-year", "--ratio", "--per-year", "--k", "--out", "--jobs", "--seed"],
        ),
        (
            "crosstest",
            &["--corpus", "--train", "--test", "--model", "--config", "--per-year", "--allow-overlap", "--out", "--seed"],
        ),
        ("report", &["--input", "--format", "--out"]),
    ];
    for (cmd, expected) in flags {
        let o = run(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        let text = stdout(&o);
        for flag in *expected {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["gen", "variant", "train", "audit", "sweep", "crosstest", "report"] {
        assert!(stdout(&o).contains(cmd));
    }
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn audit_writes_three_files_per_cell_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let cfg = write_config(dir.path(), r#"{"variants": ["v4"], "models": ["svm"], "k": 3}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["audit", "--corpus", s(&corpus), "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(field(&o, "variant").unwrap(), "v4");
        assert_eq!(field(&o, "folds").unwrap(), "3");
    }
    for name in ["report.json", "report.csv", "explanations.jsonl"] {
        let (x, y) = (a.join("v4__svm").join(name), b.join("v4__svm").join(name));
        assert!(x.exists(), "{name}");
        assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap(), "{name}");
    }
    let lines = fs::read_to_string(a.join("v4__svm/explanations.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    for key in ["sample_id", "method", "predicted_label", "top"] {
        assert!(first.get(key).is_some(), "{key}");
    }

    let o = run(&["report", "--input", s(&a.join("report.json")), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), fs::read_to_string(a.join("report.csv")).unwrap());
    let o = run(&["report", "--input", s(&a.join("report.json"))]);
    assert!(stdout(&o).contains("Top 10") && stdout(&o).contains("v4/svm"));
}

#[test]
fn missing_corpus_exits_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let body = format!(
        r#"{{"corpus": {{"path": {}}}, "variants": ["v1"], "models": ["svm"]}}"#,
        serde_json::to_string(s(&missing)).unwrap()
    );
    let cfg = write_config(dir.path(), &body);
    let o = run(&["audit", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("nowhere.jsonl"), "{}", stderr(&o));

    let o = run(&["variant", "--corpus", s(&missing), "--variant", "v1", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn crosstest_json_has_metrics_and_time_bias() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let out = dir.path().join("x.json");
    let o = run(&[
        "crosstest", "--corpus", s(&corpus), "--train", "v3", "--test", "v4", "--model", "svm", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(field(&o, "train").unwrap(), "v3");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["audit_schema"], "1");
    for key in ["accuracy", "precision", "recall", "f1", "tp", "fp", "fn", "tn"] {
        assert!(doc["metrics"].get(key).is_some(), "metrics.{key}");
    }
    let rows = doc["time_bias"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        for key in ["class", "T", "containment_added", "containment_removed", "composition_added", "composition_removed"] {
            assert!(row.get(key).is_some(), "row.{key}");
        }
    }
}

#[test]
fn variant_train_and_sweep_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let v = dir.path().join("v4.jsonl");
    let o = run(&["variant", "--corpus", s(&corpus), "--variant", "v4", "--out", s(&v)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(field(&o, "temporally_consistent").unwrap(), "false");
    let sub = load_corpus(&v).unwrap();
    assert_eq!(sub.samples.len(), 2 * 3 * 12);

    let model = dir.path().join("m.json");
    let o = run(&["train", "--corpus", s(&v), "--model", "rf", "--out", s(&model)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let loaded = TrainedModel::load(&model).unwrap();
    let acc: f64 = field(&o, "train_accuracy").unwrap().parse().unwrap();
    let correct = sub
        .samples
        .iter()
        .filter(|x| loaded.predict(x).unwrap().label == x.label)
        .count();
    assert!((correct as f64 / sub.samples.len() as f64 - acc).abs() < 1e-4);

    let out = dir.path().join("sweep");
    let o = run(&[
        "sweep", "--corpus", s(&corpus), "--model", "svm", "--ratio", "1:1", "--k", "3", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let records = stdout(&o).lines().filter(|l| l.starts_with("gap=")).count();
    assert_eq!(records, 11);
    assert!(out.join("report.json").exists());
}
