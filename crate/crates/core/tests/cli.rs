use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn triage(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triage")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(path: PathBuf) -> Vec<u8> {
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = triage(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    stdout(&out)
}

fn corpus(dir: &Path, n: &str, seed: &str) {
    ok(dir, &["generate", "--n", n, "--seed", seed, "--out", "corpus.jsonl"]);
}

#[test]
fn generate_is_reproducible_and_counts_lines() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--n", "20000", "--seed", "7", "--out", "a.jsonl"]);
    ok(d, &["--threads", "1", "generate", "--n", "20000", "--seed", "7", "--out", "b.jsonl"]);
    let a = read(d.join("a.jsonl"));
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 20000);
    assert_eq!(a, read(d.join("b.jsonl")));
    assert_eq!(read(d.join("a.manifest.json")), read(d.join("b.manifest.json")));
    let manifest: serde_json::Value = serde_json::from_slice(&read(d.join("a.manifest.json"))).unwrap();
    assert_eq!(manifest["provenance"]["seed"], 7);
    assert!(manifest["provenance"]["config_hash"].as_str().unwrap().len() == 64);
    assert!(manifest["provenance"]["tool_version"].is_string());
}

#[test]
fn usage_errors_exit_64() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&triage(d, &["generate", "--out", "x.jsonl"])), 64);
    assert_eq!(code(&triage(d, &["generate", "--n", "5", "--out", "x.jsonl", "--bogus"])), 64);
    assert_eq!(code(&triage(d, &[])), 64);
    assert_eq!(code(&triage(d, &["--threads", "0", "generate", "--n", "5", "--out", "x.jsonl"])), 64);
    assert_eq!(code(&triage(d, &["--help"])), 0);
    std::fs::write(d.join("bad.toml"), "[train]\nrounds = 3\n").unwrap();
    assert_eq!(code(&triage(d, &["--config", "bad.toml", "generate", "--n", "5", "--out", "x.jsonl"])), 64);
}

#[test]
fn io_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("empty.jsonl"), "").unwrap();
    assert_eq!(code(&triage(d, &["extract", "--input", "empty.jsonl", "--out", "t.jsonl", "--dictionary", "missing.tsv"])), 2);
    assert_eq!(code(&triage(d, &["train", "--input", "missing.jsonl", "--model", "m.json"])), 2);
    assert_eq!(code(&triage(d, &["--config", "missing.toml", "evaluate", "--fixture", "supp-table-2"])), 2);
    std::fs::write(d.join("paths.toml"), "[paths]\ndictionary = \"nowhere.tsv\"\n").unwrap();
    assert_eq!(code(&triage(d, &["--config", "paths.toml", "evaluate", "--fixture", "supp-table-2"])), 2);
}

#[test]
fn extract_on_empty_corpus_succeeds() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("empty.jsonl"), "").unwrap();
    ok(d, &["extract", "--input", "empty.jsonl", "--out", "tags.jsonl"]);
    assert!(read(d.join("tags.jsonl")).is_empty());
}

#[test]
fn extract_reports_tags_per_field() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    corpus(d, "200", "3");
    let out = ok(d, &["extract", "--input", "corpus.jsonl", "--out", "tags.jsonl"]);
    assert!(out.contains("records"));
    let text = String::from_utf8(read(d.join("tags.jsonl"))).unwrap();
    assert_eq!(text.lines().count(), 200);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["tags"]["reason_for_visit"].is_array());
}

#[test]
fn data_errors_exit_3() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("nogold.jsonl"), "{\"id\":\"a\",\"age_years\":40,\"nurse_esi\":3,\"reason_for_visit\":\"cough\"}\n")
        .unwrap();
    assert_eq!(code(&triage(d, &["evaluate", "--input", "nogold.jsonl", "--out-dir", "r"])), 3);
    std::fs::write(d.join("unlabeled.jsonl"), "{\"id\":\"a\",\"age_years\":40}\n").unwrap();
    assert_eq!(code(&triage(d, &["train", "--input", "unlabeled.jsonl", "--model", "m.json"])), 3);
}

#[test]
fn fixture_reproduces_published_agreement() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["evaluate", "--fixture", "supp-table-2"]);
    assert!(out.contains("accuracy 0.4055"), "{out}");
}

#[test]
fn evaluate_subgroups_by_age() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    corpus(d, "400", "4");
    ok(d, &["train", "--input", "corpus.jsonl", "--model", "m/model.json", "--label", "nurse", "--rounds", "10"]);
    ok(
        d,
        &[
            "evaluate",
            "--input",
            "corpus.jsonl",
            "--model",
            "m/model.json",
            "--subgroup",
            "age",
            "--resamples",
            "50",
            "--out-dir",
            "r",
        ],
    );
    let text = String::from_utf8(read(d.join("r/report.txt"))).unwrap();
    assert!(text.contains("adult") && text.contains("pediatric"), "{text}");
    let report: serde_json::Value = serde_json::from_slice(&read(d.join("r/report.json"))).unwrap();
    assert_eq!(report["n_records"], 400);
    assert!(report["provenance"]["config_hash"].is_string());
}

#[test]
fn threads_do_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    corpus(d, "1500", "8");
    for t in ["1", "3"] {
        let model = format!("m{t}/model.json");
        ok(d, &["--threads", t, "train", "--input", "corpus.jsonl", "--model", &model, "--rounds", "25"]);
        let out_dir = format!("r{t}");
        ok(
            d,
            &[
                "--threads",
                t,
                "evaluate",
                "--input",
                "corpus.jsonl",
                "--model",
                &format!("model={model}"),
                "--subgroup",
                "age",
                "--subgroup",
                "disposition",
                "--resamples",
                "200",
                "--out-dir",
                &out_dir,
            ],
        );
        let queue = format!("q{t}.jsonl");
        ok(d, &["--threads", t, "kfold-review", "--input", "corpus.jsonl", "--out", &queue, "--rounds", "8"]);
    }
    for f in [
        "m{}/model.json",
        "m{}/model.manifest.json",
        "m{}/model.loss.tsv",
        "r{}/report.json",
        "r{}/report.txt",
        "q{}.jsonl",
        "q{}.manifest.json",
    ] {
        assert_eq!(read(d.join(f.replace("{}", "1"))), read(d.join(f.replace("{}", "3"))), "{f}");
    }
}

#[test]
fn kfold_review_is_reproducible_and_seeded() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    corpus(d, "600", "2");
    ok(d, &["kfold-review", "--input", "corpus.jsonl", "--out", "a.jsonl", "--rounds", "8"]);
    ok(d, &["kfold-review", "--input", "corpus.jsonl", "--out", "b.jsonl", "--rounds", "8"]);
    ok(d, &["--seed", "99", "kfold-review", "--input", "corpus.jsonl", "--out", "c.jsonl", "--rounds", "8"]);
    let a = read(d.join("a.jsonl"));
    assert!(!a.is_empty());
    assert_eq!(a, read(d.join("b.jsonl")));
    assert_ne!(read(d.join("a.manifest.json")), read(d.join("c.manifest.json")));
}

#[test]
fn review_file_replaces_labels_before_training() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    corpus(d, "300", "6");
    ok(d, &["kfold-review", "--input", "corpus.jsonl", "--out", "queue.jsonl", "--rounds", "5"]);
    let corpus_text = String::from_utf8(read(d.join("corpus.jsonl"))).unwrap();
    let gold: std::collections::HashMap<String, u64> = corpus_text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v["gold_esi"].as_u64().unwrap())
        })
        .collect();
    let queue = String::from_utf8(read(d.join("queue.jsonl"))).unwrap();
    let review: String = queue
        .lines()
        .map(|l| {
            let id = serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().to_string();
            format!("{{\"id\":\"{id}\",\"verified_esi\":{}}}\n", gold[&id])
        })
        .collect();
    std::fs::write(d.join("review.jsonl"), review).unwrap();
    let out = ok(
        d,
        &["train", "--input", "corpus.jsonl", "--model", "m.json", "--use-verified-labels", "review.jsonl", "--rounds", "5"],
    );
    assert!(out.contains("verified labels"), "{out}");
    let manifest: serde_json::Value = serde_json::from_slice(&read(d.join("m.manifest.json"))).unwrap();
    assert!(manifest["details"]["label_update"].is_object());
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("run.toml"), "seed = 5\n[generator]\nn_records = 50\n").unwrap();
    ok(d, &["--config", "run.toml", "generate", "--out", "a.jsonl"]);
    ok(d, &["--config", "run.toml", "generate", "--n", "30", "--out", "b.jsonl"]);
    ok(d, &["--config", "run.toml", "--seed", "6", "generate", "--out", "c.jsonl"]);
    assert_eq!(String::from_utf8(read(d.join("a.jsonl"))).unwrap().lines().count(), 50);
    assert_eq!(String::from_utf8(read(d.join("b.jsonl"))).unwrap().lines().count(), 30);
    let seed = |f: &str| serde_json::from_slice::<serde_json::Value>(&read(d.join(f))).unwrap()["provenance"]["seed"].clone();
    assert_eq!(seed("a.manifest.json"), 5);
    assert_eq!(seed("c.manifest.json"), 6);
}
