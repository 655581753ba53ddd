//! Micro-averaged one-vs-rest ROC AUC.

use crate::Esi;

/// Scores pooled and sorted once; AUC under any record weighting is then a
/// linear pass. Ties count one half (the midrank rule).
#[derive(Debug, Clone)]
pub struct SortedScores {
    /// `(score, record, positive)` ascending by score.
    entries: Vec<(f64, u32, bool)>,
}

impl SortedScores {
    pub fn new(entries: impl IntoIterator<Item = (f64, u32, bool)>) -> Self {
        let mut entries: Vec<(f64, u32, bool)> = entries.into_iter().collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { entries }
    }

    /// AUC with record `r` counted `weights[r]` times.
    pub fn auc(&self, weights: &[f64]) -> Option<f64> {
        let (mut pos_total, mut neg_total, mut concordant) = (0.0, 0.0, 0.0);
        let mut i = 0;
        while i < self.entries.len() {
            let (mut pos, mut neg) = (0.0, 0.0);
            let mut j = i;
            while j < self.entries.len() && self.entries[j].0 == self.entries[i].0 {
                let (_, r, is_pos) = self.entries[j];
                if is_pos {
                    pos += weights[r as usize];
                } else {
                    neg += weights[r as usize];
                }
                j += 1;
            }
            concordant += pos * (neg_total + neg / 2.0);
            pos_total += pos;
            neg_total += neg;
            i = j;
        }
        (pos_total > 0.0 && neg_total > 0.0).then(|| concordant / (pos_total * neg_total))
    }
}

/// AUC of positive against negative scores.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let sorted = SortedScores::new(scores.iter().zip(positive).enumerate().map(|(i, (&s, &p))| (s, i as u32, p)));
    sorted.auc(&vec![1.0; scores.len()])
}

/// Every (record, class) score with a positive label for the true class.
pub fn pooled_scores(truth: &[Esi], scores: &[[f64; 5]]) -> SortedScores {
    SortedScores::new(
        truth
            .iter()
            .zip(scores)
            .enumerate()
            .flat_map(|(r, (t, s))| s.iter().enumerate().map(move |(k, &v)| (v, r as u32, k == t.class()))),
    )
}

/// Pool every (record, class) pair with its class score and a positive label
/// for the true class. Undefined when the truth holds fewer than two classes.
pub fn micro_auc(truth: &[Esi], scores: &[[f64; 5]]) -> Option<f64> {
    let first = truth.first()?;
    if truth.iter().all(|t| t == first) || truth.len() != scores.len() {
        return None;
    }
    pooled_scores(truth, scores).auc(&vec![1.0; truth.len()])
}

/// One-hot scores of hard labels.
pub fn one_hot(labels: &[Esi]) -> Vec<[f64; 5]> {
    labels
        .iter()
        .map(|e| {
            let mut s = [0.0; 5];
            s[e.class()] = 1.0;
            s
        })
        .collect()
}
