//! Multiclass gradient-boosted decision trees with a softmax objective.
//!
//! Each round computes gradients once from the current scores, grows one tree
//! per class on a shared row and column sample and adds `learning_rate` times
//! each tree's output to its class score. Split search is exact and greedy;
//! an absent feature is a missing value whose direction each split learns.

pub mod dataset;
pub mod objective;
pub mod tree;

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{Dataset, SparseRow};
pub use objective::{leaf_weight, log_loss, softmax, softmax_grad_hess, split_gain};
pub use tree::{best_split, grow_tree, GrownTree, SplitCandidate, TreeNode, TreeParams};

use crate::features::{FeatureIndex, FeatureVector};
use crate::provenance::Provenance;
use crate::Esi;

pub const N_CLASSES: usize = 5;
pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Log prior assigned to classes absent from the training labels.
pub const ABSENT_CLASS_PRIOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
    /// Fraction of rows drawn (independently per row) for each round.
    pub subsample: f64,
    /// Fraction of features drawn for each round.
    pub colsample: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_rounds: 300,
            max_depth: 6,
            learning_rate: 0.1,
            reg_lambda: 1.0,
            gamma: 0.0,
            min_child_hessian: 1.0,
            subsample: 0.8,
            colsample: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.reg_lambda >= 0.0 && self.gamma >= 0.0 && self.min_child_hessian >= 0.0) {
            return bad("reg_lambda, gamma and min_child_hessian must be non-negative");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0 && self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad("subsample and colsample must lie in (0, 1]");
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            reg_lambda: self.reg_lambda,
            gamma: self.gamma,
            min_child_hessian: self.min_child_hessian,
        }
    }
}

/// A trained ensemble: `trees[round][class]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub format_version: u32,
    pub n_classes: usize,
    pub config: TrainConfig,
    /// Feature id of each column.
    pub feature_names: Vec<String>,
    pub base_score: Vec<f64>,
    pub trees: Vec<Vec<TreeNode>>,
    /// Total split gain per feature id; only features used in a split appear.
    pub feature_gain: BTreeMap<String, f64>,
    /// Mean training log-loss after each round.
    pub training_log_loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(skip)]
    columns: HashMap<String, u32>,
}

/// Row and column sample for one round.
pub fn round_sample(n_rows: usize, n_features: usize, config: &TrainConfig, round: usize) -> (Vec<u32>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(round as u64);
    let rows: Vec<u32> = if config.subsample >= 1.0 {
        (0..n_rows as u32).collect()
    } else {
        (0..n_rows as u32).filter(|_| rng.random_bool(config.subsample)).collect()
    };
    let features = if config.colsample >= 1.0 || n_features == 0 {
        (0..n_features as u32).collect()
    } else {
        let k = ((config.colsample * n_features as f64).ceil() as usize).clamp(1, n_features);
        let mut f: Vec<u32> = sample(&mut rng, n_features, k).into_iter().map(|i| i as u32).collect();
        f.sort_unstable();
        f
    };
    (rows, features)
}

/// Train an ensemble. `feature_names[c]` names column `c` of `data`.
pub fn train(
    data: &Dataset,
    labels: &[Esi],
    feature_names: Vec<String>,
    config: &TrainConfig,
) -> Result<BoostedEnsemble, GbdtError> {
    config.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(GbdtError::EmptyDataset);
    }
    if labels.len() != n {
        return Err(GbdtError::Data(format!("{} labels for {n} rows", labels.len())));
    }
    if feature_names.len() != data.n_features() {
        return Err(GbdtError::Data(format!("{} feature names for {} columns", feature_names.len(), data.n_features())));
    }
    let classes: Vec<usize> = labels.iter().map(|e| e.class()).collect();
    let mut counts = [0usize; N_CLASSES];
    classes.iter().for_each(|&c| counts[c] += 1);
    let base_score: Vec<f64> =
        counts.iter().map(|&c| if c == 0 { ABSENT_CLASS_PRIOR.ln() } else { (c as f64 / n as f64).ln() }).collect();

    let mut scores: Vec<f64> = (0..n).flat_map(|_| base_score.iter().copied()).collect();
    let mut gain = vec![0.0; data.n_features()];
    let mut trees = Vec::with_capacity(config.n_rounds);
    let mut training_log_loss = Vec::with_capacity(config.n_rounds);
    let mut grad = vec![vec![0.0; n]; N_CLASSES];
    let mut hess = vec![vec![0.0; n]; N_CLASSES];

    for round in 0..config.n_rounds {
        for r in 0..n {
            let (g, h) = softmax_grad_hess(&scores[r * N_CLASSES..(r + 1) * N_CLASSES], classes[r]);
            for k in 0..N_CLASSES {
                grad[k][r] = g[k];
                hess[k][r] = h[k];
            }
        }
        let (rows, features) = round_sample(n, data.n_features(), config, round);
        let mut round_trees = Vec::with_capacity(N_CLASSES);
        for k in 0..N_CLASSES {
            let grown = grow_tree(data, &grad[k], &hess[k], &rows, &features, config.tree_params());
            for (f, g) in grown.split_gains {
                gain[f as usize] += g;
            }
            for r in 0..n {
                scores[r * N_CLASSES + k] += config.learning_rate * grown.root.predict(data.row(r));
            }
            round_trees.push(grown.root);
        }
        trees.push(round_trees);
        let loss: f64 = (0..n).map(|r| log_loss(&scores[r * N_CLASSES..(r + 1) * N_CLASSES], classes[r])).sum::<f64>() / n as f64;
        log::debug!("round {round}: training log-loss {loss:.6}");
        training_log_loss.push(loss);
    }

    let feature_gain = feature_names.iter().zip(&gain).filter(|(_, &g)| g > 0.0).map(|(f, &g)| (f.clone(), g)).collect();
    Ok(BoostedEnsemble::assemble(*config, feature_names, base_score, trees, feature_gain, training_log_loss))
}

/// Build a feature index from the training vectors, encode them and train.
/// The model's columns are the index order.
pub fn fit(
    vectors: &[&FeatureVector],
    labels: &[Esi],
    min_frequency: usize,
    config: &TrainConfig,
) -> Result<BoostedEnsemble, GbdtError> {
    let index = FeatureIndex::build(vectors.iter().copied(), min_frequency);
    let rows: Vec<SparseRow> = vectors.iter().map(|v| index.encode(v)).collect();
    let data = Dataset::new(rows, index.len()).map_err(GbdtError::Data)?;
    let names = index.features().iter().map(|f| f.id.clone()).collect();
    train(&data, labels, names, config)
}

impl BoostedEnsemble {
    fn assemble(
        config: TrainConfig,
        feature_names: Vec<String>,
        base_score: Vec<f64>,
        trees: Vec<Vec<TreeNode>>,
        feature_gain: BTreeMap<String, f64>,
        training_log_loss: Vec<f64>,
    ) -> Self {
        let mut model = Self {
            format_version: MODEL_FORMAT_VERSION,
            n_classes: N_CLASSES,
            config,
            feature_names,
            base_score,
            trees,
            feature_gain,
            training_log_loss,
            provenance: None,
            columns: HashMap::new(),
        };
        model.index_columns();
        model
    }

    /// A model without trees predicting the given class probabilities.
    pub fn from_priors(priors: [f64; N_CLASSES]) -> Self {
        let base = priors.iter().map(|&p| p.max(ABSENT_CLASS_PRIOR).ln()).collect();
        Self::assemble(
            TrainConfig { n_rounds: 0, ..Default::default() },
            Vec::new(),
            base,
            Vec::new(),
            BTreeMap::new(),
            Vec::new(),
        )
    }

    fn index_columns(&mut self) {
        self.columns = self.feature_names.iter().enumerate().map(|(i, f)| (f.clone(), i as u32)).collect();
    }

    /// Sparse row of a feature vector in this model's column order; unknown
    /// ids are dropped.
    pub fn encode(&self, vector: &FeatureVector) -> SparseRow {
        let mut row: SparseRow = vector.iter().filter_map(|(id, v)| self.columns.get(id).map(|&c| (c, v))).collect();
        row.sort_by_key(|e| e.0);
        row
    }

    pub fn raw_scores(&self, row: &[(u32, f64)]) -> Vec<f64> {
        let mut scores = self.base_score.clone();
        for round in &self.trees {
            for (k, tree) in round.iter().enumerate() {
                scores[k] += self.config.learning_rate * tree.predict(row);
            }
        }
        scores
    }

    pub fn predict_proba(&self, row: &[(u32, f64)]) -> Vec<f64> {
        softmax(&self.raw_scores(row))
    }

    pub fn predict_esi(&self, row: &[(u32, f64)]) -> Esi {
        argmax_esi(&self.predict_proba(row))
    }

    pub fn predict_vector(&self, vector: &FeatureVector) -> (Esi, Vec<f64>) {
        let p = self.predict_proba(&self.encode(vector));
        (argmax_esi(&p), p)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GbdtError> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| GbdtError::Format(e.to_string()))?;
        if header.format_version > MODEL_FORMAT_VERSION {
            return Err(GbdtError::Format(format!(
                "format_version {} is newer than supported version {MODEL_FORMAT_VERSION}",
                header.format_version
            )));
        }
        let mut model: Self = serde_json::from_str(text).map_err(|e| GbdtError::Format(e.to_string()))?;
        if model.n_classes != N_CLASSES || model.base_score.len() != N_CLASSES || model.trees.iter().any(|r| r.len() != N_CLASSES)
        {
            return Err(GbdtError::Format(format!("expected {N_CLASSES} classes")));
        }
        model.index_columns();
        Ok(model)
    }
}

/// Most probable ESI; exact ties go to the more acute level.
pub fn argmax_esi(proba: &[f64]) -> Esi {
    let mut best = 0;
    for (k, &p) in proba.iter().enumerate() {
        if p > proba[best] {
            best = k;
        }
    }
    Esi::ALL[best]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> (Dataset, Vec<Esi>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = i % 5;
            let x = class as f64 + (i as f64 * 0.37).sin() * 0.3;
            let y = (i as f64 * 1.3).cos();
            rows.push(vec![(0, x), (1, y)]);
            labels.push(Esi::ALL[class]);
        }
        (Dataset::new(rows, 2).unwrap(), labels)
    }

    fn names() -> Vec<String> {
        vec!["x".into(), "y".into()]
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let (ds, labels) = toy(200);
        let cfg = TrainConfig { n_rounds: 50, ..Default::default() };
        let m = train(&ds, &labels, names(), &cfg).unwrap();
        let correct = (0..200).filter(|&r| m.predict_esi(ds.row(r)) == labels[r]).count();
        assert_eq!(correct, 200);
        assert_eq!(m.n_trees(), 250);
        assert!(m.feature_gain["x"] > 0.0);
        assert!(m.feature_gain.values().all(|&g| g > 0.0));
    }

    #[test]
    fn zero_learning_rate_predicts_priors() {
        let (ds, mut labels) = toy(100);
        labels[0] = Esi::new(2).unwrap();
        let cfg = TrainConfig { n_rounds: 5, learning_rate: 0.0, ..Default::default() };
        let m = train(&ds, &labels, names(), &cfg).unwrap();
        let p = m.predict_proba(&[(0, 3.0)]);
        assert!((p[1] - 21.0 / 100.0).abs() < 1e-12);
        assert!((p[0] - 19.0 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_and_empty() {
        let (ds, _) = toy(20);
        let labels = vec![Esi::new(3).unwrap(); 20];
        let m = train(&ds, &labels, names(), &TrainConfig { n_rounds: 3, ..Default::default() }).unwrap();
        assert_eq!(m.predict_esi(&[(0, 1.0)]), Esi::new(3).unwrap());
        let empty = Dataset::new(Vec::new(), 2).unwrap();
        assert!(matches!(train(&empty, &[], names(), &TrainConfig::default()), Err(GbdtError::EmptyDataset)));
    }

    #[test]
    fn argmax_ties_prefer_acuity() {
        assert_eq!(argmax_esi(&[0.1, 0.6, 0.1, 0.1, 0.1]).level(), 2);
        assert_eq!(argmax_esi(&[0.1, 0.3, 0.3, 0.2, 0.1]).level(), 2);
        assert_eq!(argmax_esi(&[0.2; 5]).level(), 1);
        let uniform = BoostedEnsemble::from_priors([0.2; 5]);
        assert!(uniform.predict_proba(&[]).iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let (ds, labels) = toy(100);
        let m = train(&ds, &labels, names(), &TrainConfig { n_rounds: 10, ..Default::default() }).unwrap();
        let back = BoostedEnsemble::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        for r in 0..100 {
            let a = m.predict_proba(ds.row(r));
            let b = back.predict_proba(ds.row(r));
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let newer = m.to_json().replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(BoostedEnsemble::from_json(&newer), Err(GbdtError::Format(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { subsample: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { colsample: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
