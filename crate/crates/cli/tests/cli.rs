use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn semturn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semturn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semturn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(dir: &Path, file: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap()
}

fn corpus(dir: &Path) {
    ok(dir, &["synth", "--sessions", "2", "--session-length-s", "90", "--seed", "3", "--out", "corpus"]);
    ok(dir, &["segment", "--corpus", "corpus", "--seed", "1", "--out", "turns.jsonl"]);
}

const SMALL_TRAIN: &[&str] = &["--d", "8", "--epochs", "2", "--lr", "1e-3", "--text-dim", "16", "--seeds", "0,1"];

#[test]
fn segment_reproduces_manifest_turn_counts() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let manifest = json(tmp.path(), "corpus/manifest.json");
    let turns = std::fs::read_to_string(tmp.path().join("turns.jsonl")).unwrap();
    let lines: Vec<Value> = turns.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len() as u64, manifest["totals"]["turns"].as_u64().unwrap());
    let yields = lines.iter().filter(|l| l["label"] == "yield").count() as u64;
    assert_eq!(yields, manifest["totals"]["yield"].as_u64().unwrap());
    let stats = ok(tmp.path(), &["stats", "--turns", "turns.jsonl"]);
    assert!(stats.contains("hold") && stats.contains("yield"), "{stats}");
}

#[test]
fn text_model_trains_and_evaluates_to_schema_valid_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    let mut args = vec!["train", "--turns", "turns.jsonl", "--corpus", "corpus", "--modalities", "text"];
    args.extend_from_slice(SMALL_TRAIN);
    args.extend_from_slice(&["--model-out", "m.ckpt", "--out", "report.json"]);
    ok(d, &args);
    let r = json(d, "report.json");
    for key in ["config", "seeds", "mean_metrics", "modality_weights", "test_labels", "test_keys"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(r["config"]["run"]["model"]["modalities"], serde_json::json!(["text"]));
    assert!((r["modality_weights"]["text"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    ok(d, &["evaluate", "--model", "m.ckpt", "--out", "eval.json"]);
    let e = json(d, "eval.json");
    let m = &e["mean_metrics"];
    let c = m["confusion"].as_array().unwrap();
    let total: f64 = c.iter().flat_map(|r| r.as_array().unwrap()).map(|v| v.as_f64().unwrap()).sum();
    assert_eq!(total as usize, e["test_labels"].as_array().unwrap().len());
    assert_eq!(e["seeds"][0]["predictions"], r["seeds"][0]["predictions"]);
}

#[test]
fn gesture_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    ok(
        d,
        &[
            "train-vqvae", "--turns", "turns.jsonl", "--corpus", "corpus", "--epochs", "1", "--codebook-size", "8",
            "--dim", "4", "--channels", "4", "--batch-size", "64", "--out", "vq.ckpt",
        ],
    );
    assert_eq!(json(d, "vq.ckpt.json")["K"], 8);
    ok(d, &["tokenize", "--model", "vq.ckpt", "--turns", "turns.jsonl", "--corpus", "corpus", "--out", "tokens.jsonl"]);
    let tokens = std::fs::read_to_string(d.join("tokens.jsonl")).unwrap();
    let first: Value = serde_json::from_str(tokens.lines().next().unwrap()).unwrap();
    assert_eq!(first["token_ids"].as_array().unwrap().len(), 15);

    let mut args = vec!["train", "--turns", "turns.jsonl", "--corpus", "corpus", "--vq", "vq.ckpt"];
    args.extend_from_slice(SMALL_TRAIN);
    args.extend_from_slice(&["--model-out", "m.ckpt", "--out", "tag.json"]);
    ok(d, &args);
    let mut args = vec!["train", "--turns", "turns.jsonl", "--corpus", "corpus", "--modalities", "text,audio"];
    args.extend_from_slice(SMALL_TRAIN);
    args.extend_from_slice(&["--out", "ta.json"]);
    ok(d, &args);

    let w = &json(d, "tag.json")["modality_weights"];
    let sum: f64 = ["text", "audio", "gesture"].iter().map(|k| w[*k].as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-6);

    ok(d, &["compare", "--a", "tag.json", "--b", "ta.json", "--iterations", "99", "--out", "cmp.json"]);
    let p = json(d, "cmp.json")["significance"]["p_value"].as_f64().unwrap();
    assert!((0.01..=1.0).contains(&p));

    ok(d, &["analyze", "--model", "m.ckpt", "--split", "all", "--out-dir", "analysis"]);
    let proj = std::fs::read_to_string(d.join("analysis/projection.csv")).unwrap();
    assert!(proj.starts_with("x,y,type\n"));
    let weights = std::fs::read_to_string(d.join("analysis/modality_weights.csv")).unwrap();
    assert!(weights.starts_with("modality,weight\n") && weights.lines().count() == 4);
}

#[test]
fn same_seed_and_config_give_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    for out in ["a.json", "b.json"] {
        let mut args = vec!["train", "--turns", "turns.jsonl", "--corpus", "corpus", "--modalities", "text,audio"];
        args.extend_from_slice(SMALL_TRAIN);
        args.extend_from_slice(&["--out", out]);
        ok(d, &args);
    }
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
}

#[test]
fn config_file_with_unknown_key_exits_1_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("cfg.json"),
        r#"{"turns": "t.jsonl", "corpus": "c", "train": {"epochz": 3}}"#,
    )
    .unwrap();
    let out = semturn(tmp.path(), &["train", "--config", "cfg.json", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.epochz"));
    assert!(!tmp.path().join("r.json").exists());
}

#[test]
fn flags_override_config_values() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d);
    std::fs::write(
        d.join("cfg.json"),
        r#"{"turns": "turns.jsonl", "corpus": "corpus", "model": {"modalities": ["text"], "d": 8},
            "train": {"epochs": 1, "lr": 0.001}, "features": {"text": {"dim": 16}}, "seeds": [4]}"#,
    )
    .unwrap();
    ok(d, &["train", "--config", "cfg.json", "--epochs", "2", "--out", "r.json"]);
    let r = json(d, "r.json");
    assert_eq!(r["config"]["run"]["train"]["epochs"], 2);
    assert_eq!(r["config"]["run"]["model"]["d"], 8);
    assert_eq!(r["seeds"][0]["seed"], 4);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(semturn(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(semturn(tmp.path(), &["segment", "--nope"]).status.code(), Some(1));
    let help = semturn(tmp.path(), &["train-vqvae", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("--epochs") && text.contains("120"), "{text}");
    let seg = String::from_utf8_lossy(&semturn(tmp.path(), &["segment", "--help"]).stdout).to_string();
    assert!(seg.contains("200") && seg.contains("300"), "{seg}");
}

#[test]
fn invalid_values_exit_1_and_missing_inputs_do_not_write_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = semturn(d, &["segment", "--corpus", "missing", "--out", "t.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("t.jsonl").exists());
    corpus(d);
    let out = semturn(d, &["segment", "--corpus", "corpus", "--train", "0.9", "--out", "t.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let out = semturn(d, &["train", "--turns", "turns.jsonl", "--corpus", "corpus", "--fusion", "sum", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn segment_does_not_modify_its_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--sessions", "1", "--session-length-s", "60", "--out", "corpus"]);
    let snapshot = |dir: &Path| {
        let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.display().to_string(), std::fs::read(&p).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    let before = snapshot(&d.join("corpus"));
    ok(d, &["segment", "--corpus", "corpus", "--out", "turns.jsonl"]);
    assert_eq!(before, snapshot(&d.join("corpus")));
}
