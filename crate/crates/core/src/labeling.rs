//! Label review workflow: out-of-fold disagreement queues, verified-label
//! application, gold-set consensus and deletion rules.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, Featurizer};
use crate::gbdt::{fit, GbdtError, TrainConfig};
use crate::ingest::{count_missing_vitals, TriageEncounter, Vital, VitalRanges};
use crate::Esi;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot split {n} records into {k} folds")]
    Folds { k: usize, n: usize },
    #[error("record {0} has no nurse ESI")]
    MissingNurseLabel(String),
    #[error("review entry for unknown record {0}")]
    UnknownId(String),
    #[error("review file line {line}: {message}")]
    Review { line: usize, message: String },
    #[error(transparent)]
    Training(#[from] GbdtError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KFoldConfig {
    pub k: usize,
    pub seed: u64,
    /// Keep each nurse ESI level spread evenly over the folds.
    pub stratified: bool,
    pub min_frequency: usize,
}

impl Default for KFoldConfig {
    fn default() -> Self {
        Self { k: 5, seed: 0, stratified: true, min_frequency: crate::features::index::DEFAULT_MIN_FREQUENCY }
    }
}

/// Fold of each record. Records are shuffled with the seed, then (optionally
/// within each stratum) cut into `k` contiguous blocks of near-equal size.
pub fn assign_folds(strata: &[usize], k: usize, seed: u64, stratified: bool) -> Result<Vec<usize>, LabelingError> {
    let n = strata.len();
    if k < 2 || k > n {
        return Err(LabelingError::Folds { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        groups.entry(if stratified { strata[i] } else { 0 }).or_default().push(i);
    }
    let mut folds = vec![0; n];
    for members in groups.values() {
        let m = members.len();
        for (j, &i) in members.iter().enumerate() {
            folds[i] = j * k / m;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: String,
    pub nurse_esi: Esi,
    pub oof_predicted_esi: Esi,
    pub fold: usize,
}

/// Records whose out-of-fold prediction disagrees with the nurse label, in
/// input order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationQueue {
    pub entries: Vec<QueueEntry>,
    pub n_records: usize,
}

/// Train on all folds but one, predict the held-out fold, and queue every
/// record whose prediction differs from its nurse ESI. The feature index of
/// each fold is built from that fold's training records only.
pub fn kfold_disagreements(
    encounters: &[TriageEncounter],
    featurizer: &Featurizer,
    train_config: &TrainConfig,
    config: &KFoldConfig,
) -> Result<VerificationQueue, LabelingError> {
    let vectors: Vec<FeatureVector> = featurizer.featurize_all(encounters, None).into_iter().map(|f| f.vector).collect();
    kfold_disagreements_vectors(encounters, &vectors, train_config, config)
}

/// [`kfold_disagreements`] over precomputed feature vectors.
pub fn kfold_disagreements_vectors(
    encounters: &[TriageEncounter],
    vectors: &[FeatureVector],
    train_config: &TrainConfig,
    config: &KFoldConfig,
) -> Result<VerificationQueue, LabelingError> {
    let nurse: Vec<Esi> = encounters
        .iter()
        .map(|e| e.nurse_esi.ok_or_else(|| LabelingError::MissingNurseLabel(e.id.clone())))
        .collect::<Result<_, _>>()?;
    let strata: Vec<usize> = nurse.iter().map(|e| e.class()).collect();
    let folds = assign_folds(&strata, config.k, config.seed, config.stratified)?;
    let oof = out_of_fold_predictions(vectors, &nurse, &folds, config.k, config.min_frequency, train_config)?;
    let entries = encounters
        .iter()
        .enumerate()
        .filter(|&(i, _)| oof[i] != nurse[i])
        .map(|(i, e)| QueueEntry { id: e.id.clone(), nurse_esi: nurse[i], oof_predicted_esi: oof[i], fold: folds[i] })
        .collect();
    Ok(VerificationQueue { entries, n_records: encounters.len() })
}

/// Prediction for each record from the model trained without its fold.
pub fn out_of_fold_predictions(
    vectors: &[FeatureVector],
    labels: &[Esi],
    folds: &[usize],
    k: usize,
    min_frequency: usize,
    train_config: &TrainConfig,
) -> Result<Vec<Esi>, LabelingError> {
    let mut oof = vec![Esi::ALL[0]; vectors.len()];
    for fold in 0..k {
        let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = (0..vectors.len()).partition(|&i| folds[i] != fold);
        let train_vectors: Vec<&FeatureVector> = train_idx.iter().map(|&i| &vectors[i]).collect();
        let train_labels: Vec<Esi> = train_idx.iter().map(|&i| labels[i]).collect();
        let model = fit(&train_vectors, &train_labels, min_frequency, train_config)?;
        for i in test_idx {
            oof[i] = model.predict_vector(&vectors[i]).0;
        }
        log::info!("fold {fold}: trained on {} records", train_idx.len());
    }
    Ok(oof)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelUpdate {
    /// Reviewed records whose verified ESI differs from the nurse ESI.
    pub changed: usize,
    /// Reviewed records whose verified ESI equals the nurse ESI.
    pub confirmed: usize,
}

/// Record verified labels so that the training label becomes the verified ESI
/// where reviewed and the nurse ESI elsewhere.
pub fn apply_verified_labels(
    encounters: &mut [TriageEncounter],
    reviewed: &BTreeMap<String, Esi>,
) -> Result<LabelUpdate, LabelingError> {
    let positions: HashMap<&str, usize> = encounters.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
    let mut targets = Vec::with_capacity(reviewed.len());
    for (id, esi) in reviewed {
        let &i = positions.get(id.as_str()).ok_or_else(|| LabelingError::UnknownId(id.clone()))?;
        targets.push((i, *esi));
    }
    let mut update = LabelUpdate::default();
    for (i, esi) in targets {
        let enc = &mut encounters[i];
        if enc.nurse_esi == Some(esi) {
            update.confirmed += 1;
        } else {
            update.changed += 1;
        }
        enc.verified_esi = Some(esi);
    }
    Ok(update)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionReason {
    ConflictingDocumentation,
    NoConsensus,
    ImpossibleVitalSigns,
    InsufficientInformation,
    MissingVitals,
    NoReasonForVisit,
}

impl DeletionReason {
    pub const ALL: [DeletionReason; 6] = [
        DeletionReason::ConflictingDocumentation,
        DeletionReason::NoConsensus,
        DeletionReason::ImpossibleVitalSigns,
        DeletionReason::InsufficientInformation,
        DeletionReason::MissingVitals,
        DeletionReason::NoReasonForVisit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeletionReason::ConflictingDocumentation => "conflicting documentation",
            DeletionReason::NoConsensus => "clinical team could not reach consensus",
            DeletionReason::ImpossibleVitalSigns => "impossible vital signs",
            DeletionReason::InsufficientInformation => "insufficient information",
            DeletionReason::MissingVitals => "missing 4 or more vitals",
            DeletionReason::NoReasonForVisit => "no reason for visit",
        }
    }
}

/// Mechanical gold-set deletion rules; `external` carries a reviewer-supplied
/// reason (conflicting documentation, insufficient information, ...).
pub fn gold_eligibility(
    enc: &TriageEncounter,
    ranges: &VitalRanges,
    external: Option<DeletionReason>,
) -> Result<(), DeletionReason> {
    if count_missing_vitals(&enc.vitals) >= crate::ingest::MAX_MISSING_VITALS {
        return Err(DeletionReason::MissingVitals);
    }
    if enc.reason_for_visit.trim().is_empty() {
        return Err(DeletionReason::NoReasonForVisit);
    }
    let impossible = Vital::ALL.iter().any(|&v| enc.vitals.get(v).is_some_and(|x| !ranges.is_plausible(v, x)));
    if impossible {
        return Err(DeletionReason::ImpossibleVitalSigns);
    }
    external.map_or(Ok(()), Err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consensus {
    Unanimous(Esi),
    NeedsAdjudication,
}

pub fn resolve_consensus(labels: [Esi; 3]) -> Consensus {
    if labels[0] == labels[1] && labels[1] == labels[2] {
        Consensus::Unanimous(labels[0])
    } else {
        Consensus::NeedsAdjudication
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldOutcome {
    Gold(Esi),
    Deleted(DeletionReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub id: String,
    pub labels: [Esi; 3],
    pub outcome: GoldOutcome,
}

impl GoldRecord {
    /// Apply deletion rules, then consensus. A disagreement takes the
    /// adjudicated outcome, or is deleted for lack of consensus when none was
    /// recorded.
    pub fn assemble(
        enc: &TriageEncounter,
        labels: [Esi; 3],
        ranges: &VitalRanges,
        external: Option<DeletionReason>,
        adjudicated: Option<GoldOutcome>,
    ) -> Self {
        let outcome = match gold_eligibility(enc, ranges, external) {
            Err(reason) => GoldOutcome::Deleted(reason),
            Ok(()) => match resolve_consensus(labels) {
                Consensus::Unanimous(esi) => GoldOutcome::Gold(esi),
                Consensus::NeedsAdjudication => adjudicated.unwrap_or(GoldOutcome::Deleted(DeletionReason::NoConsensus)),
            },
        };
        Self { id: enc.id.clone(), labels, outcome }
    }

    pub fn gold(&self) -> Option<Esi> {
        match self.outcome {
            GoldOutcome::Gold(e) => Some(e),
            GoldOutcome::Deleted(_) => None,
        }
    }
}

/// Margin of error `z * sqrt(p (1 - p) / n)` of a sampled proportion.
pub fn sampling_moe(n: usize, p: f64, z: f64) -> f64 {
    z * (p * (1.0 - p) / n as f64).sqrt()
}

/// One line of a review file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified_esi: Option<Esi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deletion_reason: Option<DeletionReason>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Review {
    pub verified: BTreeMap<String, Esi>,
    pub deleted: BTreeMap<String, DeletionReason>,
}

/// Parse JSON Lines of `{id, verified_esi}` or `{id, deletion_reason}`.
pub fn parse_review<R: BufRead>(reader: R) -> Result<Review, LabelingError> {
    let mut review = Review::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| LabelingError::Review { line: idx + 1, message };
        let entry: ReviewEntry = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if review.verified.contains_key(&entry.id) || review.deleted.contains_key(&entry.id) {
            return Err(bad(format!("duplicate id {:?}", entry.id)));
        }
        match (entry.verified_esi, entry.deletion_reason) {
            (Some(esi), None) => {
                review.verified.insert(entry.id, esi);
            }
            (None, Some(reason)) => {
                review.deleted.insert(entry.id, reason);
            }
            _ => return Err(bad("exactly one of verified_esi and deletion_reason is required".into())),
        }
    }
    Ok(review)
}
