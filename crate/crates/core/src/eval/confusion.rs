//! Confusion matrices, triage rates and macro metrics.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::cnlp::f1_score;
use crate::Esi;

/// Counts indexed `[true class][assigned class]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 5]; 5],
}

/// Nurse ESI (rows) against verified ESI (columns), 19,652 reviewed records.
pub const SUPP_TABLE_2_NURSE_BY_VERIFIED: [[u64; 5]; 5] = [
    [117, 68, 16, 9, 2],
    [553, 1484, 484, 73, 30],
    [122, 4991, 4124, 700, 573],
    [8, 412, 715, 1856, 2705],
    [0, 30, 28, 163, 389],
];

impl ConfusionMatrix {
    pub fn from_labels(truth: &[Esi], assigned: &[Esi]) -> Result<Self, EvalError> {
        if truth.len() != assigned.len() {
            return Err(EvalError::Length { truth: truth.len(), assigned: assigned.len() });
        }
        if truth.is_empty() {
            return Err(EvalError::Empty);
        }
        Ok(Self::from_pairs(truth.iter().zip(assigned).map(|(t, a)| (*t, *a))))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Esi, Esi)>) -> Self {
        let mut m = Self::default();
        for (t, a) in pairs {
            m.counts[t.class()][a.class()] += 1;
        }
        m
    }

    /// The published nurse-by-verified table, oriented true (verified) by assigned (nurse).
    pub fn supp_table_2() -> Self {
        let mut m = Self::default();
        for (nurse, row) in SUPP_TABLE_2_NURSE_BY_VERIFIED.iter().enumerate() {
            for (verified, &c) in row.iter().enumerate() {
                m.counts[verified][nurse] = c;
            }
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..5).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, true_class: usize) -> u64 {
        self.counts[true_class].iter().sum()
    }

    pub fn column_total(&self, assigned_class: usize) -> u64 {
        self.counts.iter().map(|r| r[assigned_class]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.correct(), self.total())
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Correct, under-triaged (assigned less acute) and over-triaged (assigned more
/// acute) counts. `under` is absent for true ESI 5 and `over` for true ESI 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateCounts {
    pub n: u64,
    pub correct: u64,
    pub under: Option<u64>,
    pub over: Option<u64>,
}

impl RateCounts {
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.correct, self.n)
    }

    pub fn under_rate(&self) -> Option<f64> {
        self.under.and_then(|u| ratio(u, self.n))
    }

    pub fn over_rate(&self) -> Option<f64> {
        self.over.and_then(|o| ratio(o, self.n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageRates {
    pub overall: RateCounts,
    /// Indexed by true class; classes without records have `n == 0`.
    pub per_class: Vec<RateCounts>,
}

pub fn triage_rates(m: &ConfusionMatrix) -> TriageRates {
    let mut overall = RateCounts { n: 0, correct: 0, under: Some(0), over: Some(0) };
    let mut per_class = Vec::with_capacity(5);
    for t in 0..5 {
        let row = &m.counts[t];
        let under: u64 = row[t + 1..].iter().sum();
        let over: u64 = row[..t].iter().sum();
        let rc =
            RateCounts { n: row.iter().sum(), correct: row[t], under: (t < 4).then_some(under), over: (t > 0).then_some(over) };
        overall.n += rc.n;
        overall.correct += rc.correct;
        overall.under = overall.under.map(|u| u + under);
        overall.over = overall.over.map(|o| o + over);
        per_class.push(rc);
    }
    TriageRates { overall, per_class }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub f1: f64,
    pub sensitivity: f64,
    pub precision: f64,
}

/// Unweighted means over classes present in the truth. A class never
/// assigned has precision 0.
pub fn macro_metrics(m: &ConfusionMatrix) -> Option<MacroMetrics> {
    let present: Vec<usize> = (0..5).filter(|&c| m.row_total(c) > 0).collect();
    if present.is_empty() {
        return None;
    }
    let (mut f1, mut sens, mut prec) = (0.0, 0.0, 0.0);
    for &c in &present {
        let s = ratio(m.counts[c][c], m.row_total(c)).unwrap_or(0.0);
        let p = ratio(m.counts[c][c], m.column_total(c)).unwrap_or(0.0);
        sens += s;
        prec += p;
        f1 += f1_score(s, p);
    }
    let k = present.len() as f64;
    Some(MacroMetrics { f1: f1 / k, sensitivity: sens / k, precision: prec / k })
}
