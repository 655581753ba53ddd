//! Tag-level evaluation against a reference corpus.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::dictionary::TermType;
use super::CnlpError;
use crate::eval::bootstrap::{bootstrap_ci, BootstrapConfig, Estimate};

/// Identity of a tag for scoring. Spans are ignored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TagKey {
    pub cui: String,
    pub term_type: TermType,
    pub negated: bool,
}

/// One line of a tag corpus: `{record_id, tags: [{cui, term_type, negated}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordTags {
    pub record_id: String,
    pub tags: Vec<TagKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TagCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl TagCounts {
    fn add(&mut self, other: TagCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    fn ratio(num: u64, den: u64, vacuous: bool) -> f64 {
        if den == 0 {
            if vacuous {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    }

    fn vacuous(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    pub fn sensitivity(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_, self.vacuous())
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp, self.vacuous())
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.sensitivity(), self.precision())
    }

    /// tp / (tp + fp + fn).
    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp + self.fn_, self.vacuous())
    }
}

/// Harmonic mean of sensitivity and precision; 0 when both are 0.
pub fn f1_score(sensitivity: f64, precision: f64) -> f64 {
    if sensitivity + precision == 0.0 {
        0.0
    } else {
        2.0 * sensitivity * precision / (sensitivity + precision)
    }
}

/// Accuracy tp/(tp+fp+fn) written in terms of sensitivity and precision:
/// 1 / (1/sens + 1/prec - 1).
pub fn accuracy_from_rates(sensitivity: f64, precision: f64) -> f64 {
    1.0 / (1.0 / sensitivity + 1.0 / precision - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMetrics {
    pub counts: TagCounts,
    pub n_terms: u64,
    pub accuracy: Estimate,
    pub f1: Estimate,
    pub sensitivity: Estimate,
    pub precision: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagEvalResult {
    pub overall: TagMetrics,
    pub by_term_type: BTreeMap<TermType, TagMetrics>,
}

fn metrics(per_record: &[TagCounts], bootstrap: &BootstrapConfig) -> TagMetrics {
    let mut counts = TagCounts::default();
    per_record.iter().for_each(|c| counts.add(*c));
    let pooled = |idx: &[usize]| {
        let mut c = TagCounts::default();
        idx.iter().for_each(|&i| c.add(per_record[i]));
        c
    };
    let ci = |f: fn(&TagCounts) -> f64| {
        bootstrap_ci(per_record.len(), bootstrap, true, |idx| {
            let c = pooled(idx);
            (!c.vacuous()).then(|| f(&c))
        })
    };
    TagMetrics {
        counts,
        n_terms: counts.tp + counts.fn_,
        accuracy: Estimate::with_ci(counts.accuracy(), ci(TagCounts::accuracy)),
        f1: Estimate::with_ci(counts.f1(), ci(TagCounts::f1)),
        sensitivity: Estimate::with_ci(counts.sensitivity(), ci(TagCounts::sensitivity)),
        precision: Estimate::with_ci(counts.precision(), ci(TagCounts::precision)),
    }
}

fn compare(pred: &BTreeSet<&TagKey>, reference: &BTreeSet<&TagKey>, filter: Option<TermType>) -> TagCounts {
    let keep = |k: &&&TagKey| filter.is_none_or(|t| k.term_type == t);
    TagCounts {
        tp: pred.intersection(reference).filter(keep).count() as u64,
        fp: pred.difference(reference).filter(keep).count() as u64,
        fn_: reference.difference(pred).filter(keep).count() as u64,
    }
}

/// Pool tp/fp/fn over records matched by id and derive metrics with bootstrap
/// CIs over records, overall and per term type.
pub fn evaluate_tags(
    predicted: &[RecordTags],
    reference: &[RecordTags],
    bootstrap: &BootstrapConfig,
) -> Result<TagEvalResult, CnlpError> {
    let index = |records: &[RecordTags], what: &str| -> Result<BTreeMap<String, BTreeSet<TagKey>>, CnlpError> {
        let mut map = BTreeMap::new();
        for r in records {
            if map.insert(r.record_id.clone(), r.tags.iter().cloned().collect()).is_some() {
                return Err(CnlpError::Misaligned(format!("duplicate record id {:?} in {what}", r.record_id)));
            }
        }
        Ok(map)
    };
    let pred = index(predicted, "predictions")?;
    let refs = index(reference, "reference")?;
    if let Some(id) = pred.keys().find(|k| !refs.contains_key(*k)).or_else(|| refs.keys().find(|k| !pred.contains_key(*k))) {
        return Err(CnlpError::Misaligned(format!("record id {id:?} is not present in both tag sets")));
    }

    let pairs: Vec<(BTreeSet<&TagKey>, BTreeSet<&TagKey>)> =
        pred.iter().map(|(id, p)| (p.iter().collect(), refs[id].iter().collect())).collect();
    let per_record: Vec<TagCounts> = pairs.iter().map(|(p, r)| compare(p, r, None)).collect();
    let types: BTreeSet<TermType> = pairs.iter().flat_map(|(p, r)| p.iter().chain(r.iter()).map(|k| k.term_type)).collect();
    let by_term_type = types
        .into_iter()
        .map(|t| {
            let counts: Vec<TagCounts> = pairs.iter().map(|(p, r)| compare(p, r, Some(t))).collect();
            (t, metrics(&counts, bootstrap))
        })
        .collect();
    Ok(TagEvalResult { overall: metrics(&per_record, bootstrap), by_term_type })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(cui: &str) -> TagKey {
        TagKey { cui: cui.into(), term_type: TermType::ReasonForVisit, negated: false }
    }

    #[test]
    fn formulas() {
        let c = TagCounts { tp: 8, fp: 1, fn_: 1 };
        assert!((c.sensitivity() - 8.0 / 9.0).abs() < 1e-12);
        assert!((c.precision() - 8.0 / 9.0).abs() < 1e-12);
        assert!((c.f1() - 8.0 / 9.0).abs() < 1e-12);
        assert!((c.accuracy() - 0.8).abs() < 1e-12);
        assert_eq!(format!("{:.3}", c.sensitivity()), "0.889");
    }

    #[test]
    fn published_rates_reconcile() {
        let f1 = f1_score(0.997, 0.9877);
        assert!((f1 - 0.9923).abs() < 1e-4, "{f1}");
        let acc = accuracy_from_rates(0.997, 0.9877);
        assert!((acc - 0.9847).abs() < 2e-4, "{acc}");
    }

    #[test]
    fn accuracy_bounded_by_rates() {
        for tp in 0..6 {
            for fp in 0..6 {
                for fn_ in 0..6 {
                    let c = TagCounts { tp, fp, fn_ };
                    if c.vacuous() {
                        continue;
                    }
                    assert!(c.accuracy() <= c.sensitivity().min(c.precision()) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn identity_scores_one() {
        let recs = vec![
            RecordTags { record_id: "a".into(), tags: vec![key("T1"), key("T2")] },
            RecordTags { record_id: "b".into(), tags: vec![key("T3")] },
        ];
        let res = evaluate_tags(&recs, &recs, &BootstrapConfig { n_resamples: 50, ..Default::default() }).unwrap();
        assert_eq!(res.overall.accuracy.value, 1.0);
        assert_eq!(res.overall.f1.value, 1.0);
        assert_eq!(res.overall.counts.tp, 3);
        assert_eq!(res.overall.accuracy.lo, Some(1.0));
    }

    #[test]
    fn negation_distinguishes_tags() {
        let mut neg = key("T1");
        neg.negated = true;
        let pred = vec![RecordTags { record_id: "a".into(), tags: vec![neg] }];
        let refs = vec![RecordTags { record_id: "a".into(), tags: vec![key("T1")] }];
        let res = evaluate_tags(&pred, &refs, &BootstrapConfig { n_resamples: 10, ..Default::default() }).unwrap();
        assert_eq!(res.overall.counts, TagCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn misaligned_ids_fail() {
        let a = vec![RecordTags { record_id: "a".into(), tags: vec![] }];
        let b = vec![RecordTags { record_id: "b".into(), tags: vec![] }];
        assert!(matches!(evaluate_tags(&a, &b, &BootstrapConfig::default()), Err(CnlpError::Misaligned(_))));
    }
}
