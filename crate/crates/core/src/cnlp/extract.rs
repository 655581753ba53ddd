//! Permutation dictionary matching inside noun phrases.

use std::collections::HashSet;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::dictionary::{Dictionary, TermType};
use super::text::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Longer noun phrases are truncated to their leading tokens.
    pub max_np_len: usize,
    /// Largest token subset tried against the dictionary.
    pub max_match_len: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { max_np_len: 6, max_match_len: 4 }
    }
}

/// A normalized noun phrase token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpToken {
    pub text: String,
    pub span: Span,
    /// Index of this token in its sentence.
    pub position: usize,
}

/// An extracted clinical term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalTag {
    pub cui: String,
    pub term: String,
    pub span: Span,
    pub term_type: TermType,
    pub negated: bool,
    /// Sentence positions of the matched tokens, ascending.
    #[serde(skip)]
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NpExtraction {
    pub tags: Vec<ClinicalTag>,
    pub truncated: bool,
}

/// Match every ordering of every token subset (contiguous or not) of size
/// `1..=max_match_len` against the dictionary.
///
/// Competing matches that share a token are resolved longest first, then
/// leftmost (lexicographic on token indices). Within one subset the first
/// matching ordering wins, starting from the original order. A CUI found twice
/// in one phrase is kept once. Tags come back ordered by first token.
pub fn extract_terms(np: &[NpToken], dict: &Dictionary, config: &MatchConfig, term_type: Option<TermType>) -> NpExtraction {
    let truncated = np.len() > config.max_np_len;
    let np = &np[..np.len().min(config.max_np_len)];
    let max_size = np.len().min(config.max_match_len);

    let mut used = vec![false; np.len()];
    let mut seen_cuis = HashSet::new();
    let mut accepted: Vec<(Vec<usize>, &str)> = Vec::new();
    let mut key = String::new();
    for size in (1..=max_size).rev() {
        for subset in (0..np.len()).combinations(size) {
            if subset.iter().any(|&i| used[i]) {
                continue;
            }
            let found = subset.iter().permutations(size).find_map(|order| {
                key.clear();
                for (n, &&i) in order.iter().enumerate() {
                    if n > 0 {
                        key.push(' ');
                    }
                    key.push_str(&np[i].text);
                }
                dict.lookup(&key)
            });
            if let Some(cui) = found {
                for &i in &subset {
                    used[i] = true;
                }
                if seen_cuis.insert(cui) {
                    accepted.push((subset, cui));
                }
            }
        }
    }
    accepted.sort_by_key(|(subset, _)| subset[0]);

    let tags = accepted
        .into_iter()
        .map(|(subset, cui)| {
            let first = &np[subset[0]];
            let last = &np[*subset.last().expect("non-empty subset")];
            ClinicalTag {
                cui: cui.to_string(),
                term: dict.concept(cui).map(|c| c.preferred_term.clone()).unwrap_or_default(),
                span: Span::new(first.span.start, last.span.end),
                term_type: term_type.or_else(|| dict.term_type(cui)).unwrap_or(TermType::ReasonForVisit),
                negated: false,
                positions: subset.iter().map(|&i| np[i].position).collect(),
            }
        })
        .collect();
    NpExtraction { tags, truncated }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn np(words: &[&str]) -> Vec<NpToken> {
        let mut offset = 0;
        words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let t = NpToken { text: w.to_string(), span: Span::new(offset, offset + w.len()), position: i };
                offset += w.len() + 1;
                t
            })
            .collect()
    }

    fn dict() -> Dictionary {
        let mut d = Dictionary::default();
        d.insert("chest pain", "T0001", "chest pain", TermType::ReasonForVisit);
        d.insert("pain", "T0052", "pain", TermType::ReasonForVisit);
        d.insert("radiating chest pain", "T0002", "radiating chest pain", TermType::ReasonForVisit);
        d.insert("fever", "T0008", "fever", TermType::ReasonForVisit);
        d
    }

    fn cuis(x: &NpExtraction) -> Vec<&str> {
        x.tags.iter().map(|t| t.cui.as_str()).collect()
    }

    #[test]
    fn permutation_and_direct_matches() {
        let d = dict();
        let cfg = MatchConfig::default();
        assert_eq!(cuis(&extract_terms(&np(&["pain", "chest"]), &d, &cfg, None)), vec!["T0001"]);
        assert_eq!(cuis(&extract_terms(&np(&["chest", "pain"]), &d, &cfg, None)), vec!["T0001"]);
        assert!(extract_terms(&np(&["blue", "widget"]), &d, &cfg, None).tags.is_empty());
    }

    #[test]
    fn longest_match_wins_then_leftmost() {
        let d = dict();
        let cfg = MatchConfig::default();
        let x = extract_terms(&np(&["radiating", "chest", "pain"]), &d, &cfg, None);
        assert_eq!(cuis(&x), vec!["T0002"]);
        let x = extract_terms(&np(&["fever", "severe", "chest", "pain"]), &d, &cfg, None);
        assert_eq!(cuis(&x), vec!["T0008", "T0001"]);
        // Non-contiguous subset.
        let x = extract_terms(&np(&["chest", "wall", "pain"]), &d, &cfg, None);
        assert_eq!(cuis(&x), vec!["T0001"]);
        assert_eq!(x.tags[0].positions, vec![0, 2]);
        assert_eq!(x.tags[0].span, Span::new(0, 15));
    }

    #[test]
    fn duplicate_cuis_deduplicated() {
        let d = dict();
        let x = extract_terms(&np(&["pain", "chest", "pain", "chest"]), &d, &MatchConfig::default(), None);
        assert_eq!(cuis(&x), vec!["T0001"]);
    }

    #[test]
    fn long_phrases_truncated() {
        let d = dict();
        let words = ["a", "b", "c", "d", "e", "f", "fever"];
        let x = extract_terms(&np(&words), &d, &MatchConfig::default(), None);
        assert!(x.truncated);
        assert!(x.tags.is_empty());
    }

    #[test]
    fn term_type_override() {
        let d = dict();
        let x = extract_terms(&np(&["fever"]), &d, &MatchConfig::default(), Some(TermType::PreviousIllness));
        assert_eq!(x.tags[0].term_type, TermType::PreviousIllness);
    }
}
