use std::path::Path;

use mmsenti::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mmsenti").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = cli(args);
    assert_eq!(code, EXIT_OK, "{args:?} failed: {err}");
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Generates a small keyword fixture, splits it and builds a knowledge base.
/// Returns (test set, kb) paths.
fn prepare(dir: &Path, keyword_rate: &str) -> (String, String) {
    let data = dir.join("data.jsonl");
    let kb = dir.join("kb.bin");
    let set = ["--set", "dimension=16"];
    ok(&[&set[..], &["generate", "--per-label", "20", "--keyword-rate", keyword_rate, "--seed", "9", "--out", p(&data)]].concat());
    ok(&["split", p(&data), "--fraction", "0.25", "--seed", "3", "--out-dir", p(dir)]);
    ok(&[&set[..], &["build-kb", "--train", p(&dir.join("train.jsonl")), "--out", p(&kb)]].concat());
    (p(&dir.join("test.jsonl")).to_string(), p(&kb).to_string())
}

#[test]
fn keyword_fixture_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let (test, kb) = prepare(dir.path(), "1.0");
    let out = ok(&["--set", "dimension=16", "eval", "--test", &test, "--kb", &kb]);
    let row = out.lines().find(|l| l.starts_with("Full pipeline")).expect("full row");
    assert_eq!(row.matches("100.0").count(), 4, "{row}");
}

#[test]
fn ablate_all_emits_every_row_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let (test, kb) = prepare(dir.path(), "0.5");
    let out = ok(&["--set", "dimension=16", "eval", "--test", &test, "--kb", &kb, "--ablate", "all"]);
    let rows: Vec<&str> = out
        .lines()
        .filter(|l| l.starts_with("Full pipeline") || l.starts_with("w/o "))
        .collect();
    let prefixes = [
        "Full pipeline",
        "w/o KB Assistant",
        "w/o Fusion Inspector",
        "w/o Image Analyst",
        "w/o Text Analyst",
        "w/o Classifier Aggregator",
    ];
    assert_eq!(rows.len(), prefixes.len(), "{out}");
    for (row, prefix) in rows.iter().zip(prefixes) {
        assert!(row.starts_with(prefix), "{row}");
        assert_eq!(row.split('|').count(), 5, "{row}");
    }
    let json: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(json["results"].as_array().unwrap().len(), 6);
}

#[test]
fn single_ablation_adds_full_row() {
    let dir = tempfile::tempdir().unwrap();
    let (test, kb) = prepare(dir.path(), "0.5");
    let out = ok(&["--set", "dimension=16", "eval", "--test", &test, "--kb", &kb, "--ablate", "no-kb"]);
    assert!(out.contains("Full pipeline"));
    assert!(out.contains("w/o KB Assistant"));
    assert!(!out.contains("w/o Text Analyst"));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (test, kb) = prepare(dir.path(), "0.5");
    let preds_a = dir.path().join("a.jsonl");
    let preds_b = dir.path().join("b.jsonl");
    let a = ok(&["--set", "dimension=16", "eval", "--test", &test, "--kb", &kb, "--jobs", "4", "--out", p(&preds_a)]);
    let b = ok(&["--set", "dimension=16", "eval", "--test", &test, "--kb", &kb, "--jobs", "1", "--out", p(&preds_b)]);
    assert_eq!(a, b);
    assert_eq!(std::fs::read(&preds_a).unwrap(), std::fs::read(&preds_b).unwrap());
}

#[test]
fn run_prints_trace_and_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let (test, kb) = prepare(dir.path(), "1.0");
    let out = ok(&["--set", "dimension=16", "run", "--post", &test, "--kb", &kb, "--mode", "text_only"]);
    let preds: Vec<serde_json::Value> = out
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(preds.len(), 35);
    assert!(preds.iter().all(|v| v["label"].is_string() && v["id"].is_string()));
}

#[test]
fn stats_and_split_report_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (test, _) = prepare(dir.path(), "0.5");
    let out = ok(&["stats", &test]);
    let json: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(json["samples"], 35);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["eval", "--bogus"]).0, EXIT_USAGE);
    assert_eq!(cli(&[]).0, EXIT_USAGE);
    assert_eq!(cli(&["split", "x.jsonl", "--fraction", "1.5", "--out-dir", "."]).0, EXIT_USAGE);
    assert_eq!(cli(&["eval", "--test", "t", "--kb", "k", "--ablate", "nope"]).0, EXIT_USAGE);
    assert_eq!(cli(&["eval", "--test", "t", "--kb", "k", "--jobs", "0"]).0, EXIT_USAGE);
    assert_eq!(cli(&["--set", "alpha=0.9", "stats", "x"]).0, EXIT_USAGE);
}

#[test]
fn missing_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (test, _) = prepare(dir.path(), "0.5");
    let missing = dir.path().join("missing.bin");
    let (code, _, err) = cli(&["--set", "dimension=16", "eval", "--test", &test, "--kb", p(&missing)]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("missing.bin"), "{err}");

    let garbage = dir.path().join("garbage.bin");
    std::fs::write(&garbage, b"not a knowledge base").unwrap();
    assert_eq!(cli(&["--set", "dimension=16", "eval", "--test", &test, "--kb", p(&garbage)]).0, EXIT_DATA);

    // A store built at another dimension does not match the configuration.
    let kb = dir.path().join("kb.bin");
    assert_eq!(cli(&["--set", "dimension=8", "eval", "--test", &test, "--kb", p(&kb)]).0, EXIT_DATA);
}

#[test]
fn help_goes_to_stdout() {
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("build-kb"));
}
