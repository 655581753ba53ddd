//! One test per acceptance criterion. Each prints a single PASS/FAIL line with
//! the measured value and its pinned tolerance.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triage_core::cnlp::evaluate::{accuracy_from_rates, f1_score};
use triage_core::eval::bootstrap::{bootstrap_ci, BootstrapConfig};
use triage_core::eval::{triage_rates, ConfusionMatrix};
use triage_core::features::{FeatureVector, Featurizer};
use triage_core::gbdt::{fit, grow_tree, BoostedEnsemble, TrainConfig, TreeNode, TreeParams};
use triage_core::ingest::TriageEncounter;
use triage_core::labeling::{kfold_disagreements_vectors, sampling_moe, KFoldConfig};
use triage_core::synth::{generate, identity_noise_matrix, verified_distribution, GeneratorConfig};
use triage_core::Esi;

fn report(criterion: u32, pass: bool, detail: String) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion}: {detail}");
}

fn within(started: Instant, limit_secs: u64) -> (bool, Duration) {
    let elapsed = started.elapsed();
    (elapsed < Duration::from_secs(limit_secs), elapsed)
}

fn held_out_accuracy(model: &BoostedEnsemble, vectors: &[FeatureVector], truth: &[Esi]) -> f64 {
    let correct = vectors.iter().zip(truth).filter(|(v, t)| model.predict_vector(v).0 == **t).count();
    correct as f64 / truth.len() as f64
}

fn featurize(corpus: &[TriageEncounter]) -> Vec<FeatureVector> {
    Featurizer::bundled().featurize_all(corpus, None).into_iter().map(|f| f.vector).collect()
}

fn gold(corpus: &[TriageEncounter]) -> Vec<Esi> {
    corpus.iter().map(|e| e.gold_esi.expect("generated records carry gold")).collect()
}

#[test]
fn criterion_01_supp_table_2_fixture() {
    let started = Instant::now();
    let m = ConfusionMatrix::supp_table_2();
    let rates = triage_rates(&m);
    let o = rates.overall;
    let accuracy = o.accuracy().unwrap();
    let (fast, elapsed) = within(started, 1);
    let pass = (accuracy - 0.40555).abs() <= 1e-4
        && o.n == SUPP_TABLE_2_TOTAL
        && o.under == Some(SUPP_TABLE_2_UNDER)
        && o.over == Some(SUPP_TABLE_2_OVER)
        && fast;
    report(
        1,
        pass,
        format!(
            "accuracy {accuracy:.5} (target 0.40555 +/- 1e-4), under {:?} (hand {SUPP_TABLE_2_UNDER}), over {:?} (hand {SUPP_TABLE_2_OVER}), {elapsed:.2?}",
            o.under, o.over
        ),
    );
}

#[test]
fn criterion_02_tag_metric_reconciliation() {
    let f1 = f1_score(0.997, 0.9877);
    let accuracy = accuracy_from_rates(0.997, 0.9877);
    let pass = (f1 - 0.9923).abs() <= 1e-4 && (accuracy - 0.9847).abs() <= 2e-4;
    report(2, pass, format!("f1 {f1:.5} (0.9923 +/- 1e-4), accuracy {accuracy:.5} (0.9847 +/- 2e-4)"));
}

#[test]
fn criterion_03_rate_decomposition() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    for _ in 0..200 {
        let rates = triage_rates(&random_matrix(&mut rng));
        let o = rates.overall;
        let overall_ok = o.correct + o.under.unwrap() + o.over.unwrap() == o.n;
        let classes_ok = rates.per_class.iter().all(|c| c.correct + c.under.unwrap_or(0) + c.over.unwrap_or(0) == c.n);
        failures += usize::from(!(overall_ok && classes_ok));
    }
    let (fast, elapsed) = within(started, 1);
    report(3, failures == 0 && fast, format!("{failures} of 200 matrices break correct + under + over = n, {elapsed:.2?}"));
}

#[test]
fn criterion_04_gradient_check() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let worst = (0..100)
        .map(|_| {
            let (scores, class) = random_scores(&mut rng);
            gradient_check_error(&scores, class)
        })
        .fold(0.0, f64::max);
    let (fast, elapsed) = within(started, 5);
    report(4, worst < 1e-6 && fast, format!("max relative error {worst:.2e} (< 1e-6) over 100 score vectors, {elapsed:.2?}"));
}

#[test]
fn criterion_05_split_oracle() {
    let started = Instant::now();
    let params = TreeParams { max_depth: 1, reg_lambda: 1.0, gamma: 0.0, min_child_hessian: 1.0 };
    let mut mismatches = Vec::new();
    for seed in 0..50 {
        let p = random_split_problem(seed);
        let rows: Vec<u32> = (0..p.dense.len() as u32).collect();
        let features: Vec<u32> = (0..p.data.n_features() as u32).collect();
        let tree = grow_tree(&p.data, &p.grad, &p.hess, &rows, &features, params);
        let agrees = match (brute_force_root_gain(&p, params), &tree.root) {
            (None, TreeNode::Leaf { .. }) => true,
            (Some(best), TreeNode::Split { feature, threshold, missing_goes_left, gain, .. }) => {
                close(*gain, best, 1e-9)
                    && close(partition_gain(&p, *feature as usize, *threshold, *missing_goes_left, params), best, 1e-9)
            }
            _ => false,
        };
        if !agrees {
            mismatches.push(seed);
        }
    }
    let (fast, elapsed) = within(started, 30);
    report(
        5,
        mismatches.is_empty() && fast,
        format!("root split differs from brute force on seeds {mismatches:?} of 50, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_06_end_to_end_noiseless() {
    let started = Instant::now();
    let corpus =
        generate(&GeneratorConfig { n_records: 20_000, seed: 7, noise_matrix: identity_noise_matrix(), ..Default::default() })
            .unwrap();
    let vectors = featurize(&corpus);
    let truth = gold(&corpus);
    let (train_v, test_v) = vectors.split_at(16_000);
    let (train_y, test_y) = truth.split_at(16_000);
    let refs: Vec<&FeatureVector> = train_v.iter().collect();
    let model = fit(&refs, train_y, 5, &TrainConfig::default()).unwrap();
    let accuracy = held_out_accuracy(&model, test_v, test_y);
    let (fast, elapsed) = within(started, 300);
    report(
        6,
        accuracy >= 0.90 && fast,
        format!("held-out accuracy {accuracy:.4} (>= 0.90) on 4000 records, {elapsed:.1?} (< 5 min)"),
    );
}

#[test]
fn criterion_07_verified_label_ablation() {
    let started = Instant::now();
    let corpus = generate(&GeneratorConfig { n_records: 20_000, seed: 7, ..Default::default() }).unwrap();
    let vectors = featurize(&corpus);
    let truth = gold(&corpus);
    let (train_c, _) = corpus.split_at(16_000);
    let (train_v, test_v) = vectors.split_at(16_000);
    let (train_y, test_y) = truth.split_at(16_000);
    let refs: Vec<&FeatureVector> = train_v.iter().collect();
    let config = TrainConfig::default();

    let nurse: Vec<Esi> = train_c.iter().map(|e| e.nurse_esi.unwrap()).collect();
    let noisy = fit(&refs, &nurse, 5, &config).unwrap();
    let before = held_out_accuracy(&noisy, test_v, test_y);

    let queue = kfold_disagreements_vectors(train_c, train_v, &config, &KFoldConfig::default()).unwrap();
    let mut relabeled = nurse.clone();
    let position: std::collections::HashMap<&str, usize> = train_c.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    for entry in &queue.entries {
        let i = position[entry.id.as_str()];
        relabeled[i] = train_y[i];
    }
    let reviewed = fit(&refs, &relabeled, 5, &config).unwrap();
    let after = held_out_accuracy(&reviewed, test_v, test_y);
    let (fast, elapsed) = within(started, 900);
    report(
        7,
        after - before >= 0.02 && fast,
        format!(
            "held-out accuracy {before:.4} -> {after:.4} (+{:.1} pp, >= 2 pp) after relabeling {} queued records, {elapsed:.1?} (< 15 min)",
            100.0 * (after - before),
            queue.entries.len()
        ),
    );
}

#[test]
fn criterion_08_nurse_noise_calibration() {
    let started = Instant::now();
    let corpus = generate(&GeneratorConfig {
        n_records: 20_000,
        seed: 8,
        esi_distribution: verified_distribution(),
        ..Default::default()
    })
    .unwrap();
    let agree = corpus.iter().filter(|e| e.nurse_esi == e.gold_esi).count() as f64 / corpus.len() as f64;
    let (fast, elapsed) = within(started, 60);
    report(
        8,
        (agree - 0.40).abs() <= 0.02 && fast,
        format!("nurse-vs-true accuracy {agree:.4} (0.40 +/- 0.02) on 20000 records, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_09_cnlp_corpus_and_permutation_closure() {
    let started = Instant::now();
    let m = mini_corpus_metrics();
    let failures = permutation_closure_failures(1000, 9);
    let (fast, elapsed) = within(started, 10);
    report(
        9,
        m.precision.value >= 0.95 && m.sensitivity.value >= 0.95 && failures.is_empty() && fast,
        format!(
            "mini-corpus precision {:.4} recall {:.4} (both >= 0.95), closure failures {} of 1000 pairs, {elapsed:.2?}",
            m.precision.value,
            m.sensitivity.value,
            failures.len()
        ),
    );
}

fn run(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_triage")).current_dir(dir).args(args).output().expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn criterion_10_thread_determinism_and_round_trip() {
    let started = Instant::now();
    let tmp = tempfile::TempDir::new().unwrap();
    let d = tmp.path();
    run(d, &["generate", "--n", "2000", "--seed", "10", "--out", "corpus.jsonl"]);
    let n_threads = std::thread::available_parallelism().map_or(4, |n| n.get().max(4)).to_string();
    for t in ["1", n_threads.as_str()] {
        run(d, &["--threads", t, "train", "--input", "corpus.jsonl", "--model", &format!("m{t}/model.json")]);
        run(
            d,
            &[
                "--threads",
                t,
                "evaluate",
                "--input",
                "corpus.jsonl",
                "--model",
                &format!("m{t}/model.json"),
                "--subgroup",
                "age",
                "--out-dir",
                &format!("r{t}"),
            ],
        );
    }
    let same = |f: &str| {
        std::fs::read(d.join(f.replace("{}", "1"))).unwrap() == std::fs::read(d.join(f.replace("{}", &n_threads))).unwrap()
    };
    let files = ["m{}/model.json", "m{}/model.loss.tsv", "r{}/report.json", "r{}/report.txt"];
    let identical = files.iter().all(|f| same(f));

    let text = std::fs::read_to_string(d.join("m1/model.json")).unwrap();
    let model = BoostedEnsemble::from_json(&text).unwrap();
    let back = BoostedEnsemble::from_json(&model.to_json()).unwrap();
    let corpus =
        triage_core::ingest::parse_encounters(std::io::BufReader::new(std::fs::File::open(d.join("corpus.jsonl")).unwrap()))
            .unwrap()
            .encounters;
    let bit_exact = model.to_json() == text
        && featurize(&corpus).iter().all(|v| {
            let (a, b) = (model.predict_vector(v).1, back.predict_vector(v).1);
            a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits())
        });
    let (fast, elapsed) = within(started, 600);
    report(
        10,
        identical && bit_exact && fast,
        format!("--threads 1 vs {n_threads}: files identical {identical}, round-trip bit-exact {bit_exact}, {elapsed:.1?}"),
    );
}

#[test]
fn criterion_11_bootstrap_coverage_and_moe() {
    let started = Instant::now();
    let (p, n, sims) = (0.3, 200, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut covered = 0;
    for s in 0..sims {
        let draws: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(p)))).collect();
        let config = BootstrapConfig { n_resamples: 1000, seed: s, level: 0.95 };
        let mean = |idx: &[usize]| Some(idx.iter().map(|&i| draws[i]).sum::<f64>() / idx.len() as f64);
        let (lo, hi) = bootstrap_ci(n, &config, true, mean).unwrap();
        covered += usize::from(lo <= p && p <= hi);
    }
    let coverage = covered as f64 / sims as f64;
    let moe = sampling_moe(729, 0.5, 1.96);
    let (fast, elapsed) = within(started, 60);
    report(
        11,
        (0.93..=0.97).contains(&coverage) && (moe - 0.0363).abs() <= 1e-4 && fast,
        format!("coverage {coverage:.3} (0.93-0.97) over {sims} simulations, sampling_moe(729) {moe:.5} (0.0363 +/- 1e-4), {elapsed:.1?}"),
    );
}
