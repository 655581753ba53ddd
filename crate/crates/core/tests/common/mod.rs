#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use triage_core::cnlp::evaluate::TagMetrics;
use triage_core::cnlp::{evaluate_tags, extract_terms, Dictionary, MatchConfig, NpToken, Pipeline, RecordTags, Span, TagKey};
use triage_core::eval::BootstrapConfig;
use triage_core::eval::ConfusionMatrix;
use triage_core::gbdt::{log_loss, softmax_grad_hess, split_gain, Dataset, TreeParams};

/// Under-triage and over-triage counts of the published nurse-by-verified
/// matrix, summed by hand over the cells above and below the diagonal.
pub const SUPP_TABLE_2_UNDER: u64 = 7022;
pub const SUPP_TABLE_2_OVER: u64 = 4660;
pub const SUPP_TABLE_2_TOTAL: u64 = 19652;

pub fn random_matrix(rng: &mut impl Rng) -> ConfusionMatrix {
    let mut counts = [[0u64; 5]; 5];
    for row in counts.iter_mut() {
        for cell in row.iter_mut() {
            *cell = if rng.random_bool(0.2) { 0 } else { rng.random_range(0..1000) };
        }
    }
    ConfusionMatrix { counts }
}

fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative error of the analytic gradient and diagonal Hessian of
/// the 5-class log-loss against central finite differences.
pub fn gradient_check_error(scores: &[f64], true_class: usize) -> f64 {
    let (g, h) = softmax_grad_hess(scores, true_class);
    let h_step = 1e-3;
    let mut worst: f64 = 0.0;
    for k in 0..scores.len() {
        let at = |x: f64| {
            let mut s = scores.to_vec();
            s[k] = x;
            s
        };
        let fd_g = derivative(|x| log_loss(&at(x), true_class), scores[k], h_step);
        let fd_h = derivative(|x| softmax_grad_hess(&at(x), true_class).0[k], scores[k], h_step);
        worst = worst.max(relative_error(g[k], fd_g)).max(relative_error(h[k], fd_h));
    }
    worst
}

pub fn random_scores(rng: &mut impl Rng) -> (Vec<f64>, usize) {
    ((0..5).map(|_| rng.random_range(-5.0..5.0)).collect(), rng.random_range(0..5))
}

/// A dense dataset with repeated values and missing cells, plus gradients
/// and Hessians.
pub struct SplitProblem {
    pub dense: Vec<Vec<Option<f64>>>,
    pub data: Dataset,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

pub fn random_split_problem(seed: u64) -> SplitProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=200);
    let m = rng.random_range(1..=10);
    let levels = rng.random_range(2..=30);
    let missing = rng.random_range(0.0..0.4);
    let dense: Vec<Vec<Option<f64>>> = (0..n)
        .map(|_| {
            (0..m).map(|_| (!rng.random_bool(missing)).then(|| f64::from(rng.random_range(0..levels)) * 0.5 - 3.0)).collect()
        })
        .collect();
    let grad = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let hess = (0..n).map(|_| rng.random_range(0.01..0.25)).collect();
    let data = Dataset::from_dense(&dense).expect("dense data is valid");
    SplitProblem { dense, data, grad, hess }
}

/// Best root gain by enumerating every feature, every boundary between
/// consecutive distinct present values (plus the present-vs-missing cut) and
/// both missing directions.
pub fn brute_force_root_gain(p: &SplitProblem, params: TreeParams) -> Option<f64> {
    let n = p.dense.len();
    let m = p.dense.first().map_or(0, Vec::len);
    let mut best: Option<f64> = None;
    for f in 0..m {
        let mut values: Vec<f64> = p.dense.iter().filter_map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut thresholds: Vec<f64> = values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        if let Some(&lo) = values.first() {
            thresholds.push(lo);
        }
        for &t in &thresholds {
            for missing_left in [false, true] {
                let (mut gl, mut hl, mut nl, mut gr, mut hr, mut nr) = (0.0, 0.0, 0, 0.0, 0.0, 0);
                for r in 0..n {
                    let left = p.dense[r][f].map_or(missing_left, |x| x < t);
                    if left {
                        gl += p.grad[r];
                        hl += p.hess[r];
                        nl += 1;
                    } else {
                        gr += p.grad[r];
                        hr += p.hess[r];
                        nr += 1;
                    }
                }
                if nl == 0 || nr == 0 || hl < params.min_child_hessian || hr < params.min_child_hessian {
                    continue;
                }
                let gain = split_gain(gl, hl, gr, hr, params.reg_lambda, params.gamma);
                if gain > 0.0 && best.is_none_or(|b| gain > b) {
                    best = Some(gain);
                }
            }
        }
    }
    best
}

/// Gain of an explicit root partition, recomputed from the dense data.
pub fn partition_gain(p: &SplitProblem, feature: usize, threshold: f64, missing_left: bool, params: TreeParams) -> f64 {
    let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
    for (r, row) in p.dense.iter().enumerate() {
        if row[feature].map_or(missing_left, |x| x < threshold) {
            gl += p.grad[r];
            hl += p.hess[r];
        } else {
            gr += p.grad[r];
            hr += p.hess[r];
        }
    }
    split_gain(gl, hl, gr, hr, params.reg_lambda, params.gamma)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[derive(Deserialize)]
struct CorpusLine {
    record_id: String,
    text: String,
    tags: Vec<TagKey>,
}

/// The hand-labeled mini-corpus: (record id, text, reference tags).
pub fn mini_corpus() -> Vec<(String, String, Vec<TagKey>)> {
    include_str!("../data/cnlp_mini_corpus.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: CorpusLine = serde_json::from_str(l).expect("corpus line parses");
            (c.record_id, c.text, c.tags)
        })
        .collect()
}

pub fn predicted_tags(pipeline: &Pipeline, corpus: &[(String, String, Vec<TagKey>)]) -> Vec<RecordTags> {
    corpus
        .iter()
        .map(|(id, text, _)| RecordTags {
            record_id: id.clone(),
            tags: pipeline
                .extract(text, None)
                .tags
                .into_iter()
                .map(|t| TagKey { cui: t.cui, term_type: t.term_type, negated: t.negated })
                .collect(),
        })
        .collect()
}

/// Pooled tag metrics of the bundled pipeline on the mini-corpus.
pub fn mini_corpus_metrics() -> TagMetrics {
    let corpus = mini_corpus();
    let pred = predicted_tags(&Pipeline::bundled(), &corpus);
    let reference: Vec<RecordTags> =
        corpus.iter().map(|(id, _, tags)| RecordTags { record_id: id.clone(), tags: tags.clone() }).collect();
    evaluate_tags(&pred, &reference, &BootstrapConfig { n_resamples: 200, ..Default::default() }).unwrap().overall
}

pub fn np(tokens: &[&str]) -> Vec<NpToken> {
    let mut offset = 0;
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let span = Span::new(offset, offset + t.len());
            offset += t.len() + 1;
            NpToken { text: t.to_string(), span, position: i }
        })
        .collect()
}

pub fn multiset(key: &str) -> Vec<&str> {
    let mut tokens: Vec<&str> = key.split(' ').collect();
    tokens.sort_unstable();
    tokens
}

/// Shuffle the tokens of `pairs` random dictionary entries (at most four
/// tokens) and return the shuffles where no entry with that token multiset
/// was found.
pub fn permutation_closure_failures(pairs: usize, seed: u64) -> Vec<String> {
    let dict = Dictionary::bundled();
    let config = MatchConfig::default();
    let entries: Vec<(&str, &str)> = dict.entries().into_iter().filter(|(k, _)| k.split(' ').count() <= 4).collect();
    let mut cuis_by_multiset: BTreeMap<Vec<&str>, BTreeSet<&str>> = BTreeMap::new();
    for &(key, cui) in &entries {
        cuis_by_multiset.entry(multiset(key)).or_default().insert(cui);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for _ in 0..pairs {
        let (key, _) = entries[rng.random_range(0..entries.len())];
        let mut tokens: Vec<&str> = key.split(' ').collect();
        tokens.shuffle(&mut rng);
        let found = extract_terms(&np(&tokens), &dict, &config, None);
        let accepted = &cuis_by_multiset[&multiset(key)];
        if !found.tags.iter().any(|t| accepted.contains(t.cui.as_str())) {
            failures.push(tokens.join(" "));
        }
    }
    failures
}
