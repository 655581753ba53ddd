//! Per-rater reports with bootstrap intervals, subgroup splits and the
//! disposition-by-ESI distribution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::auc::{one_hot, pooled_scores};
use super::bootstrap::{bootstrap_cis, BootstrapConfig, Estimate};
use super::confusion::{macro_metrics, triage_rates, ConfusionMatrix, RateCounts};
use super::EvalError;
use crate::gbdt::argmax_esi;
use crate::ingest::Disposition;
use crate::provenance::Provenance;
use crate::Esi;

/// What a rater produced for each record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaterOutput {
    Labels(Vec<Esi>),
    Probabilities(Vec<[f64; 5]>),
}

impl RaterOutput {
    pub fn len(&self) -> usize {
        match self {
            RaterOutput::Labels(l) => l.len(),
            RaterOutput::Probabilities(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn assigned(&self) -> Vec<Esi> {
        match self {
            RaterOutput::Labels(l) => l.clone(),
            RaterOutput::Probabilities(p) => p.iter().map(|p| argmax_esi(p)).collect(),
        }
    }

    /// Class scores; hard labels become one-hot.
    pub fn scores(&self) -> Vec<[f64; 5]> {
        match self {
            RaterOutput::Labels(l) => one_hot(l),
            RaterOutput::Probabilities(p) => p.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if let RaterOutput::Probabilities(p) = self {
            for (i, row) in p.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|x| !(0.0..=1.0).contains(x)) || (sum - 1.0).abs() > 1e-6 {
                    return Err(EvalError::Probabilities(i));
                }
            }
        }
        Ok(())
    }

    fn subset(&self, idx: &[usize]) -> RaterOutput {
        match self {
            RaterOutput::Labels(l) => RaterOutput::Labels(idx.iter().map(|&i| l[i]).collect()),
            RaterOutput::Probabilities(p) => RaterOutput::Probabilities(idx.iter().map(|&i| p[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rater {
    pub name: String,
    pub output: RaterOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub esi: Esi,
    pub counts: RateCounts,
    pub accuracy: Option<Estimate>,
    pub under_triage: Option<Estimate>,
    pub over_triage: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rater: String,
    pub n_records: usize,
    pub counts: RateCounts,
    pub accuracy: Estimate,
    pub under_triage: Estimate,
    pub over_triage: Estimate,
    pub per_class: Vec<ClassReport>,
    pub macro_f1: Estimate,
    pub macro_sensitivity: Estimate,
    pub macro_precision: Estimate,
    pub micro_auc: Option<Estimate>,
    pub confusion: ConfusionMatrix,
}

const N_STATS: usize = 22;

fn statistics(m: &ConfusionMatrix) -> Vec<Option<f64>> {
    let rates = triage_rates(m);
    let mut out = Vec::with_capacity(N_STATS);
    out.push(rates.overall.accuracy());
    out.push(rates.overall.under_rate());
    out.push(rates.overall.over_rate());
    for c in &rates.per_class {
        out.extend([c.accuracy(), c.under_rate(), c.over_rate()]);
    }
    let mm = macro_metrics(m);
    out.extend([mm.map(|x| x.f1), mm.map(|x| x.sensitivity), mm.map(|x| x.precision)]);
    out
}

/// Full metric set of one rater against the truth, with percentile bootstrap
/// intervals over records.
pub fn evaluate_rater(truth: &[Esi], rater: &Rater, bootstrap: &BootstrapConfig) -> Result<EvalReport, EvalError> {
    rater.output.validate()?;
    let assigned = rater.output.assigned();
    let confusion = ConfusionMatrix::from_labels(truth, &assigned)?;
    let scores = rater.output.scores();
    let multi_class = truth.iter().any(|t| *t != truth[0]);
    let pooled = multi_class.then(|| pooled_scores(truth, &scores));

    let point = statistics(&confusion);
    let point_auc = pooled.as_ref().and_then(|p| p.auc(&vec![1.0; truth.len()]));
    let cis = bootstrap_cis(truth.len(), bootstrap, true, |idx| {
        let m = ConfusionMatrix::from_pairs(idx.iter().map(|&i| (truth[i], assigned[i])));
        let mut stats = statistics(&m);
        let auc = pooled.as_ref().and_then(|p| {
            let mut w = vec![0.0; truth.len()];
            idx.iter().for_each(|&i| w[i] += 1.0);
            let first = truth[idx[0]];
            idx.iter().any(|&i| truth[i] != first).then(|| p.auc(&w)).flatten()
        });
        stats.push(auc);
        stats
    });
    let est = |s: usize| point[s].map(|v| Estimate::with_ci(v, cis.get(s).copied().flatten()));
    let rates = triage_rates(&confusion);
    let per_class = (0..5)
        .map(|c| ClassReport {
            esi: Esi::ALL[c],
            counts: rates.per_class[c],
            accuracy: est(3 + 3 * c),
            under_triage: est(4 + 3 * c),
            over_triage: est(5 + 3 * c),
        })
        .collect();
    let required = |s: usize| est(s).expect("non-empty truth defines overall statistics");
    Ok(EvalReport {
        rater: rater.name.clone(),
        n_records: truth.len(),
        counts: rates.overall,
        accuracy: required(0),
        under_triage: required(1),
        over_triage: required(2),
        per_class,
        macro_f1: required(18),
        macro_sensitivity: required(19),
        macro_precision: required(20),
        micro_auc: point_auc.map(|v| Estimate::with_ci(v, cis.get(21).copied().flatten())),
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouper {
    Site,
    AgeBand,
    HighRisk,
    Disposition,
}

impl Grouper {
    pub const ALL: [Grouper; 4] = [Grouper::Site, Grouper::AgeBand, Grouper::HighRisk, Grouper::Disposition];

    pub fn as_str(self) -> &'static str {
        match self {
            Grouper::Site => "site",
            Grouper::AgeBand => "age",
            Grouper::HighRisk => "high_risk",
            Grouper::Disposition => "disposition",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.as_str() == name)
    }
}

/// Record attributes used for subgroup splits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordContext {
    pub site: String,
    pub age_years: f64,
    pub high_risk: Vec<String>,
    pub disposition: Option<Disposition>,
}

/// Group names a record belongs to; one record may fall in several
/// high-risk groups.
pub fn group_names(grouper: Grouper, ctx: &RecordContext) -> Vec<String> {
    match grouper {
        Grouper::Site => vec![if ctx.site.is_empty() { "unknown".to_string() } else { ctx.site.clone() }],
        Grouper::AgeBand => vec![if ctx.age_years < 18.0 { "pediatric" } else { "adult" }.to_string()],
        Grouper::HighRisk => ctx.high_risk.clone(),
        Grouper::Disposition => vec![ctx.disposition.map_or("unknown", Disposition::as_str).to_string()],
    }
}

pub const DEFAULT_MIN_SUBGROUP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub grouper: Grouper,
    pub group: String,
    pub n_records: usize,
    /// Set when the group is smaller than the minimum count; no metrics are reported.
    pub suppressed: bool,
    pub reports: Vec<EvalReport>,
}

pub fn subgroup_report(
    truth: &[Esi],
    contexts: &[RecordContext],
    raters: &[Rater],
    groupers: &[Grouper],
    min_count: usize,
    bootstrap: &BootstrapConfig,
) -> Result<Vec<SubgroupReport>, EvalError> {
    let mut out = Vec::new();
    for &grouper in groupers {
        let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, ctx) in contexts.iter().enumerate() {
            for g in group_names(grouper, ctx) {
                members.entry(g).or_default().push(i);
            }
        }
        for (group, idx) in members {
            let suppressed = idx.len() < min_count;
            let reports = if suppressed {
                Vec::new()
            } else {
                let sub_truth: Vec<Esi> = idx.iter().map(|&i| truth[i]).collect();
                raters
                    .iter()
                    .map(|r| {
                        let sub = Rater { name: r.name.clone(), output: r.output.subset(&idx) };
                        evaluate_rater(&sub_truth, &sub, bootstrap)
                    })
                    .collect::<Result<_, _>>()?
            };
            out.push(SubgroupReport { grouper, group, n_records: idx.len(), suppressed, reports });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispositionRow {
    pub disposition: String,
    pub total: u64,
    /// Records per assigned ESI level.
    pub counts: [u64; 5],
}

/// Disposition (rows) by assigned ESI (columns) for one rater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispositionTable {
    pub rater: String,
    pub rows: Vec<DispositionRow>,
}

pub fn disposition_table(rater: &str, assigned: &[Esi], dispositions: &[Option<Disposition>]) -> DispositionTable {
    let mut rows: BTreeMap<String, [u64; 5]> = BTreeMap::new();
    for (esi, d) in assigned.iter().zip(dispositions) {
        rows.entry(d.map_or("unknown", Disposition::as_str).to_string()).or_insert([0; 5])[esi.class()] += 1;
    }
    DispositionTable {
        rater: rater.to_string(),
        rows: rows
            .into_iter()
            .map(|(disposition, counts)| DispositionRow { disposition, total: counts.iter().sum(), counts })
            .collect(),
    }
}

/// Mean of the named raters' overall accuracies.
pub fn mean_accuracy<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> Option<f64> {
    let acc: Vec<f64> = reports.into_iter().map(|r| r.accuracy.value).collect();
    (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
}

/// Everything `evaluate` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub truth: String,
    pub n_records: usize,
    pub bootstrap: BootstrapConfig,
    pub raters: Vec<EvalReport>,
    /// Mean overall accuracy of the external label raters.
    pub external_mean_accuracy: Option<f64>,
    pub subgroups: Vec<SubgroupReport>,
    pub disposition: Vec<DispositionTable>,
}
