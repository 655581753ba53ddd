//! Clinical text pipeline: sentence split, tokenize, normalize, POS tag,
//! chunk noun phrases, match permutations against a dictionary, scope negation.
//!
//! All stages are deterministic and rule based. [`Pipeline`] owns the
//! immutable resources and can be shared across threads.

pub mod dictionary;
pub mod evaluate;
pub mod extract;
pub mod negation;
pub mod tagger;
pub mod text;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

pub use dictionary::{normalize_key, Dictionary, TermType};
pub use evaluate::{evaluate_tags, f1_score, RecordTags, TagEvalResult, TagKey};
pub use extract::{extract_terms, ClinicalTag, MatchConfig, NpToken};
pub use negation::detect_negation;
pub use tagger::{chunk_noun_phrases, pos_tag, Lexicon, PosTag};
pub use text::{normalize, split_sentences, tokenize, Abbreviations, SentenceGuards, Span, Token};

#[derive(Debug, Error)]
pub enum CnlpError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{what} line {line}: {message}")]
    Format { what: &'static str, line: usize, message: String },
    #[error("dictionary relation cycle through {0}")]
    Cycle(String),
    #[error("dictionary parent {0} is not a known concept")]
    UnknownParent(String),
    #[error("tag evaluation: {0}")]
    Misaligned(String),
}

/// A normalized word in a sentence after abbreviation expansion and
/// multi-word merging.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub span: Span,
    pub tag: PosTag,
}

/// Result of running the pipeline over one text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub tags: Vec<ClinicalTag>,
    /// Non-punctuation tokens seen before normalization.
    pub words: usize,
    pub noun_phrases: usize,
    /// Noun phrases cut to `max_np_len`.
    pub truncated_phrases: usize,
}

/// The full extraction pipeline with its resources.
#[derive(Debug, Clone)]
pub struct Pipeline {
    dictionary: Dictionary,
    abbreviations: Abbreviations,
    lexicon: Lexicon,
    guards: SentenceGuards,
    config: MatchConfig,
    /// Dictionary terms the chunker cannot produce (they contain function
    /// words or do not end in a noun); merged into one NOUN token before tagging.
    multiword: HashSet<String>,
    max_multiword_len: usize,
}

impl Pipeline {
    pub fn bundled() -> Self {
        Self::new(
            Dictionary::bundled(),
            Abbreviations::bundled(),
            Lexicon::bundled(),
            SentenceGuards::bundled(),
            MatchConfig::default(),
        )
    }

    pub fn with_dictionary(dictionary: Dictionary) -> Self {
        Self::new(dictionary, Abbreviations::bundled(), Lexicon::bundled(), SentenceGuards::bundled(), MatchConfig::default())
    }

    pub fn new(
        dictionary: Dictionary,
        abbreviations: Abbreviations,
        lexicon: Lexicon,
        guards: SentenceGuards,
        config: MatchConfig,
    ) -> Self {
        let mut multiword = HashSet::new();
        let mut max_multiword_len = 0;
        for key in dictionary.keys() {
            let words: Vec<&str> = key.split(' ').collect();
            let tags = pos_tag(&words, &lexicon);
            let chunkable = tags.iter().all(|t| t.is_np_member()) && tags.last() == Some(&PosTag::Noun);
            if !chunkable {
                max_multiword_len = max_multiword_len.max(words.len());
                multiword.insert(key.to_string());
            }
        }
        Self { dictionary, abbreviations, lexicon, guards, config, multiword, max_multiword_len }
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn config(&self) -> &MatchConfig {
        &self.config
    }

    /// Tokenize, normalize and tag one sentence (given as a span of `text`).
    pub fn sentence_words(&self, text: &str, sentence: Span) -> (Vec<Word>, usize) {
        let raw = tokenize(sentence.slice(text), sentence.start);
        let mut n_words = 0;
        let mut normalized: Vec<(String, Span, bool)> = Vec::with_capacity(raw.len());
        for token in &raw {
            if token.is_punctuation() {
                normalized.push((token.text.clone(), token.span, true));
                continue;
            }
            n_words += 1;
            for part in normalize(&token.text, &self.abbreviations).split_whitespace() {
                normalized.push((part.to_string(), token.span, false));
            }
        }

        let mut words = Vec::with_capacity(normalized.len());
        let mut i = 0;
        while i < normalized.len() {
            let (text_i, span_i, punct) = &normalized[i];
            if *punct {
                words.push(Word { text: text_i.clone(), span: *span_i, tag: PosTag::Other });
                i += 1;
                continue;
            }
            let mut merged = None;
            let longest = self.max_multiword_len.min(normalized.len() - i);
            for len in (1..=longest).rev() {
                let window = &normalized[i..i + len];
                if window.iter().any(|w| w.2) {
                    continue;
                }
                let key = window.iter().map(|w| w.0.as_str()).collect::<Vec<_>>().join(" ");
                if self.multiword.contains(&key) {
                    merged = Some((key, Span::new(window[0].1.start, window[len - 1].1.end), len));
                    break;
                }
            }
            match merged {
                Some((key, span, len)) => {
                    words.push(Word { text: key, span, tag: PosTag::Noun });
                    i += len;
                }
                None => {
                    words.push(Word { text: text_i.clone(), span: *span_i, tag: self.lexicon.tag(text_i) });
                    i += 1;
                }
            }
        }
        (words, n_words)
    }

    /// Run the pipeline. `term_type` overrides the dictionary's term type,
    /// which is how callers label tags by source field.
    pub fn extract(&self, text: &str, term_type: Option<TermType>) -> Extraction {
        let mut out = Extraction::default();
        for sentence in split_sentences(text, &self.guards) {
            let (words, n_words) = self.sentence_words(text, sentence);
            out.words += n_words;
            let tags: Vec<PosTag> = words.iter().map(|w| w.tag).collect();
            let mut sentence_tags = Vec::new();
            for np in chunk_noun_phrases(&tags) {
                let tokens: Vec<NpToken> =
                    np.clone().map(|i| NpToken { text: words[i].text.clone(), span: words[i].span, position: i }).collect();
                let found = extract_terms(&tokens, &self.dictionary, &self.config, term_type);
                out.noun_phrases += 1;
                out.truncated_phrases += usize::from(found.truncated);
                sentence_tags.extend(found.tags);
            }
            let texts: Vec<&str> = words.iter().map(|w| w.text.as_str()).collect();
            detect_negation(&mut sentence_tags, &texts, &tags);
            debug_assert!(sentence_tags.iter().all(|t| sentence.contains(&t.span)));
            out.tags.extend(sentence_tags);
        }
        out
    }
}

/// Count tags per CUI; handy for corpus statistics.
pub fn cui_counts<'a>(tags: impl IntoIterator<Item = &'a ClinicalTag>) -> HashMap<&'a str, usize> {
    let mut counts = HashMap::new();
    for tag in tags {
        *counts.entry(tag.cui.as_str()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(ex: &Extraction) -> Vec<(String, bool)> {
        ex.tags.iter().map(|t| (t.term.clone(), t.negated)).collect()
    }

    #[test]
    fn negation_examples() {
        let p = Pipeline::bundled();
        assert_eq!(summary(&p.extract("denies chest pain", None)), vec![("chest pain".into(), true)]);
        assert_eq!(summary(&p.extract("chest pain", None)), vec![("chest pain".into(), false)]);
        assert_eq!(
            summary(&p.extract("no fever but chest pain", None)),
            vec![("fever".into(), true), ("chest pain".into(), false)]
        );
        assert_eq!(summary(&p.extract("Negative for fever.", None)), vec![("fever".into(), true)]);
    }

    #[test]
    fn negation_window_is_four_tokens() {
        let p = Pipeline::bundled();
        // "no" sits five tokens before "cough".
        let ex = p.extract("no fever , chills , cough", None);
        let cough = ex.tags.iter().find(|t| t.term == "cough").unwrap();
        assert!(!cough.negated);
        let ex = p.extract("no fever , cough", None);
        assert!(ex.tags.iter().all(|t| t.negated));
    }

    #[test]
    fn abbreviations_and_multiword_terms() {
        let p = Pipeline::bundled();
        let ex = p.extract("Pt c/o SOB and abd pain x 2 days.", None);
        let terms: Vec<&str> = ex.tags.iter().map(|t| t.term.as_str()).collect();
        assert_eq!(terms, vec!["shortness of breath", "abdominal pain"]);
        let ex = p.extract("altered level of consciousness, throwing up", None);
        let terms: Vec<&str> = ex.tags.iter().map(|t| t.term.as_str()).collect();
        assert_eq!(terms, vec!["altered mental status", "vomiting"]);
    }

    #[test]
    fn spans_stay_inside_sentences() {
        let p = Pipeline::bundled();
        let text = "Severe radiating chest pain since this morning. Denies SOB; hx of HTN.";
        let sentences = split_sentences(text, &SentenceGuards::bundled());
        let ex = p.extract(text, None);
        assert!(!ex.tags.is_empty());
        for tag in &ex.tags {
            assert!(sentences.iter().any(|s| s.contains(&tag.span)), "{tag:?}");
            assert!(p.dictionary().contains_cui(&tag.cui));
        }
        assert_eq!(ex.tags[0].span.slice(text), "radiating chest pain");
    }

    #[test]
    fn word_counts() {
        let p = Pipeline::bundled();
        let ex = p.extract("CP x3 days. Denies SOB.", None);
        assert_eq!(ex.words, 5);
        assert_eq!(p.extract("", None), Extraction::default());
    }
}
