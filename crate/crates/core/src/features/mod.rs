//! Sparse feature vectors from encounters.
//!
//! Feature ids are namespaced strings:
//!
//! | id | value |
//! |----|-------|
//! | `cui:<CUI>`, `cui_neg:<CUI>` | affirmed / negated reason-for-visit concept |
//! | `cui_parent:<CUI>` | ancestor of an affirmed reason-for-visit concept |
//! | `pmh:`, `psh:`, `soc:`, `med:` (and `*_neg:`) `<CUI>` | medical, surgical, social history and medication concepts |
//! | `hr:<flag>` | satisfied high-risk rule |
//! | `dur:<unit>` | first duration expression in the reason for visit |
//! | `social_risk:<name>` | social or environmental risk category |
//! | `derived:n_rfv_terms`, `derived:pain_above_acceptable`, `derived:n_missing_vitals`, `derived:n_risk_zone_vitals` | counts and indicators |
//! | `vital:<hr,rr,sbp,dbp,temp,spo2>`, `num:age`, `num:pain`, `num:gcs` | raw numeric values |
//! | `cat:<field>=<value>` | categorical fields (sex, arrival mode, arrived from) |
//!
//! Binary features have value 1. Entries equal to 0 are never stored.

pub mod engineering;
pub mod index;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engineering::{
    affirmed_concepts, bin_duration, derive_parent_features, high_risk_flags, rule_context, scalar_features,
    social_risk_features, SocialRisk, SocialRiskTable,
};
pub use index::FeatureIndex;

use crate::cnlp::{ClinicalTag, Pipeline, TermType};
use crate::ingest::{Sex, TriageEncounter, VitalRanges};
use crate::rules::{DangerZones, RuleTable};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{table} line {line}: {message}")]
    Format { table: &'static str, line: usize, message: String },
    #[error("feature index: {0}")]
    Index(String),
}

/// Sparse map from feature id to value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    entries: BTreeMap<String, f64>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Set a value; zero removes the entry.
    pub fn set(&mut self, id: impl Into<String>, value: f64) {
        let id = id.into();
        if value == 0.0 {
            self.entries.remove(&id);
        } else {
            self.entries.insert(id, value);
        }
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.entries.retain(|k, _| keep(k));
    }
}

impl FromIterator<(String, f64)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        let mut v = Self::new();
        iter.into_iter().for_each(|(k, x)| v.set(k, x));
        v
    }
}

/// Free-text fields, with the namespace prefix and term type given to their tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextField {
    ReasonForVisit,
    MedicalHistory,
    SurgicalHistory,
    SocialHistory,
    Medications,
}

impl TextField {
    pub const ALL: [TextField; 5] = [
        TextField::ReasonForVisit,
        TextField::MedicalHistory,
        TextField::SurgicalHistory,
        TextField::SocialHistory,
        TextField::Medications,
    ];

    /// Encounter field name.
    pub fn name(self) -> &'static str {
        match self {
            TextField::ReasonForVisit => "reason_for_visit",
            TextField::MedicalHistory => "medical_history",
            TextField::SurgicalHistory => "surgical_history",
            TextField::SocialHistory => "social_history",
            TextField::Medications => "medications",
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            TextField::ReasonForVisit => "cui",
            TextField::MedicalHistory => "pmh",
            TextField::SurgicalHistory => "psh",
            TextField::SocialHistory => "soc",
            TextField::Medications => "med",
        }
    }

    pub fn term_type(self) -> TermType {
        match self {
            TextField::ReasonForVisit => TermType::ReasonForVisit,
            TextField::MedicalHistory => TermType::PreviousIllness,
            TextField::SurgicalHistory => TermType::Surgeries,
            TextField::SocialHistory => TermType::Problems,
            TextField::Medications => TermType::TriageTreatment,
        }
    }

    pub fn text(self, enc: &TriageEncounter) -> &str {
        match self {
            TextField::ReasonForVisit => &enc.reason_for_visit,
            TextField::MedicalHistory => &enc.medical_history,
            TextField::SurgicalHistory => &enc.surgical_history,
            TextField::SocialHistory => &enc.social_history,
            TextField::Medications => &enc.medications,
        }
    }
}

/// Everything derived from one encounter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Featurized {
    pub vector: FeatureVector,
    /// Tags extracted from each free-text field, in [`TextField::ALL`] order.
    pub tags: Vec<Vec<ClinicalTag>>,
    pub high_risk_flags: Vec<String>,
    pub unrecognized_risk_factors: usize,
}

impl Featurized {
    pub fn n_text_tags(&self) -> usize {
        self.tags.iter().map(Vec::len).sum()
    }
}

/// Resources for featurization. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub pipeline: Pipeline,
    pub high_risk: RuleTable,
    pub danger_zones: DangerZones,
    pub social_risk: SocialRiskTable,
    pub vital_ranges: VitalRanges,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self::bundled()
    }
}

impl Featurizer {
    pub fn bundled() -> Self {
        Self {
            pipeline: Pipeline::bundled(),
            high_risk: RuleTable::bundled_high_risk(),
            danger_zones: DangerZones::bundled(),
            social_risk: SocialRiskTable::bundled(),
            vital_ranges: VitalRanges::default(),
        }
    }

    /// Featurize one encounter, restricted to `index` when given.
    pub fn featurize(&self, enc: &TriageEncounter, index: Option<&FeatureIndex>) -> FeatureVector {
        self.featurize_detailed(enc, index).vector
    }

    pub fn featurize_detailed(&self, enc: &TriageEncounter, index: Option<&FeatureIndex>) -> Featurized {
        let dict = self.pipeline.dictionary();
        let (vitals, _) = self.vital_ranges.clean(&enc.vitals);
        let mut v = FeatureVector::new();

        let tags: Vec<Vec<ClinicalTag>> =
            TextField::ALL.iter().map(|f| self.pipeline.extract(f.text(enc), Some(f.term_type())).tags).collect();
        for (field, field_tags) in TextField::ALL.iter().zip(&tags) {
            for tag in field_tags {
                let ns = if tag.negated { format!("{}_neg", field.prefix()) } else { field.prefix().to_string() };
                v.set(format!("{ns}:{}", tag.cui), 1.0);
            }
        }
        let rfv = &tags[0];
        let affirmed: Vec<&ClinicalTag> = rfv.iter().filter(|t| !t.negated).collect();
        for parent in derive_parent_features(affirmed.iter().copied(), dict) {
            v.set(format!("cui_parent:{parent}"), 1.0);
        }

        let ctx = rule_context(enc, &vitals, affirmed_concepts(rfv, dict), &self.danger_zones);
        let flags = high_risk_flags(&ctx, &self.high_risk);
        for flag in &flags {
            v.set(format!("hr:{flag}"), 1.0);
        }
        if let Some(unit) = bin_duration(&enc.reason_for_visit) {
            v.set(format!("dur:{unit}"), 1.0);
        }
        let social = social_risk_features(&enc.risk_factors, &tags[3], &self.social_risk);
        for name in &social.categories {
            v.set(format!("social_risk:{name}"), 1.0);
        }
        for (id, value) in scalar_features(enc, &vitals, rfv.len(), &self.danger_zones) {
            v.set(id, value);
        }
        let sex = match enc.sex {
            Sex::Female => "female",
            Sex::Male => "male",
            Sex::Unknown => "",
        };
        for (field, value) in
            [("sex", sex), ("arrival_mode", enc.arrival_mode.as_str()), ("arrived_from", enc.arrived_from.as_str())]
        {
            let value = value.trim().to_lowercase();
            if !value.is_empty() {
                v.set(format!("cat:{field}={value}"), 1.0);
            }
        }

        if let Some(index) = index {
            v.retain(|id| index.contains(id));
        }
        Featurized { vector: v, tags, high_risk_flags: flags, unrecognized_risk_factors: social.unrecognized }
    }

    /// Featurize many encounters in parallel; output order follows input order.
    pub fn featurize_all(&self, encounters: &[TriageEncounter], index: Option<&FeatureIndex>) -> Vec<Featurized> {
        encounters.par_iter().map(|e| self.featurize_detailed(e, index)).collect()
    }
}
