use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn exddi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exddi")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = exddi(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn first_record(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()).find(|v| v.get("_meta").is_none()).unwrap()
}

#[test]
fn stepwise_commands_chain_together() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.jsonl");
    let prepared = tmp.path().join("prepared.jsonl");
    let index = tmp.path().join("index.jsonl");
    let preds = tmp.path().join("preds.jsonl");

    ok(&["fixture", "--drugs", "40", "--positives", "60", "--seed", "3", "--output", p(&data)]);
    let ingest: Value = serde_json::from_str(&ok(&["ingest", p(&data), "--output", p(&prepared)])).unwrap();
    assert_eq!(ingest["accepted"], 120);
    let head = std::fs::read_to_string(&prepared).unwrap();
    assert!(head.lines().next().unwrap().contains("\"_meta\""));

    let folds: Value = serde_json::from_str(&ok(&["split", p(&prepared), "--folds", "3", "--output", p(tmp.path())])).unwrap();
    assert_eq!(folds.as_array().unwrap().len(), 3);
    assert!(tmp.path().join("fold2/split.jsonl").exists());

    ok(&["index", p(&prepared), "--output", p(&index), "--k", "10"]);
    let rec = first_record(&prepared);
    let (s1, s2) = (rec["smiles1"].as_str().unwrap(), rec["smiles2"].as_str().unwrap());
    let single: Value = serde_json::from_str(&ok(&["predict", "--index", p(&index), "--smiles1", s1, "--smiles2", s2])).unwrap();
    assert!(single["label"] == "positive" || single["label"] == "negative");

    ok(&["predict", "--index", p(&index), "--queries", p(&prepared), "--output", p(&preds)]);
    let report: Value = serde_json::from_str(&ok(&[
        "evaluate",
        "--predictions",
        p(&preds),
        "--gold",
        p(&prepared),
        "--templates",
        p(&prepared),
    ]))
    .unwrap();
    assert_eq!(report["n"], 120);
    assert!(report["binary"]["accuracy"].as_f64().unwrap() > 0.5);
    assert!(report["generation"]["bleu"].is_number());

    let prompt = ok(&["prompt", "--index", p(&index), "--smiles1", s1, "--smiles2", s2, "--n", "2"]);
    assert!(prompt.contains("Examples:\n1. Drug1: "));
    assert!(prompt.trim_end().ends_with(&format!("Drug1: {s1} Drug2: {s2} Answer:")));

    let ckpt = tmp.path().join("model.txt");
    ok(&["train-bilinear", p(&prepared), "--output", p(&ckpt), "--epochs", "2", "--d", "4"]);
    assert!(std::fs::read_to_string(&ckpt).unwrap().starts_with("# exddi-bilinear d=4 seed=0"));
}

#[test]
fn run_honours_config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.jsonl");
    ok(&["fixture", "--drugs", "40", "--positives", "60", "--output", p(&data)]);
    let cfg = tmp.path().join("run.conf");
    std::fs::write(&cfg, format!("dataset = {}\nfolds = 5\nk = 10\n", data.display())).unwrap();
    let out = tmp.path().join("out");
    let table = ok(&["run", "--config", p(&cfg), "--set", "seed=4", "--folds", "2", "--output", p(&out)]);
    assert!(table.contains("rv test"));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["test_sets"]["test"]["accuracy"]["per_fold"].as_array().unwrap().len(), 2);
    assert_eq!(summary["_meta"]["seed"], 4);
    assert!(!out.join("fold2").exists());
}

#[test]
fn exit_codes_separate_config_data_and_runtime_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.jsonl");
    ok(&["fixture", "--drugs", "30", "--positives", "40", "--output", p(&data)]);
    let code = |args: &[&str]| exddi(args).status.code().unwrap();

    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["run", "--dataset", p(&data), "--set", "k=0"]), 1);
    assert_eq!(code(&["run", "--dataset", p(&data), "--set", "colour=red"]), 1);
    assert_eq!(code(&["run", "--dataset", p(&tmp.path().join("missing.jsonl"))]), 2);

    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(code(&["ingest", p(&bad), "--strict"]), 2);

    let index = tmp.path().join("index.jsonl");
    ok(&["index", p(&data), "--output", p(&index), "--k", "5"]);
    assert_eq!(code(&["predict", "--index", p(&index), "--smiles1", "C1CC", "--smiles2", "CCO"]), 2);

    let out = tmp.path().join("ic");
    let ic = exddi(&["run", "--dataset", p(&data), "--method", "ic", "--folds", "2", "--output", p(&out)]);
    assert_eq!(ic.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&ic.stderr).contains("null"));
    assert_eq!(code(&["--help"]), 0);
}
