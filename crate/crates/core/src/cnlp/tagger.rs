//! Lexicon-driven part-of-speech tagging and noun phrase chunking.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use super::CnlpError;

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Adj,
    Verb,
    Num,
    Prep,
    Det,
    Neg,
    Other,
}

impl PosTag {
    /// Tags allowed inside a noun phrase.
    pub fn is_np_member(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Adj | PosTag::Num)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PosTag::Noun => "NOUN",
            PosTag::Adj => "ADJ",
            PosTag::Verb => "VERB",
            PosTag::Num => "NUM",
            PosTag::Prep => "PREP",
            PosTag::Det => "DET",
            PosTag::Neg => "NEG",
            PosTag::Other => "OTHER",
        };
        f.write_str(s)
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "NOUN" => PosTag::Noun,
            "ADJ" => PosTag::Adj,
            "VERB" => PosTag::Verb,
            "NUM" => PosTag::Num,
            "PREP" => PosTag::Prep,
            "DET" => PosTag::Det,
            "NEG" => PosTag::Neg,
            "OTHER" => PosTag::Other,
            other => return Err(format!("unknown POS tag {other:?}")),
        })
    }
}

const ADJ_SUFFIXES: &[&str] = &["al", "ous", "ive", "ic", "ful", "less", "able", "ible", "ary"];
const VERB_SUFFIXES: &[&str] = &["ing", "ed"];

#[derive(Debug, Clone, Default)]
pub struct Lexicon(HashMap<String, PosTag>);

impl Lexicon {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_LEXICON.as_bytes()).expect("bundled lexicon is valid")
    }

    /// TSV with columns `word, tag`; a `word\ttag` header is skipped.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, CnlpError> {
        let mut map = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("word\t")) {
                continue;
            }
            let bad = |message: String| CnlpError::Format { what: "lexicon", line: idx + 1, message };
            let (word, tag) = line.split_once('\t').ok_or_else(|| bad("expected two columns".into()))?;
            map.insert(word.trim().to_lowercase(), tag.parse().map_err(bad)?);
        }
        Ok(Self(map))
    }

    pub fn get(&self, word: &str) -> Option<PosTag> {
        self.0.get(word).copied()
    }

    /// Tag one normalized word: lexicon, then digit rule, then suffix rules,
    /// defaulting to NOUN.
    pub fn tag(&self, word: &str) -> PosTag {
        if let Some(tag) = self.get(word) {
            return tag;
        }
        if word.chars().any(|c| c.is_ascii_digit()) && word.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '/') {
            return PosTag::Num;
        }
        if word.chars().all(|c| !c.is_alphanumeric()) {
            return PosTag::Other;
        }
        if word.len() > 4 {
            if word.ends_with("ly") {
                return PosTag::Other;
            }
            if ADJ_SUFFIXES.iter().any(|s| word.ends_with(s)) {
                return PosTag::Adj;
            }
            if VERB_SUFFIXES.iter().any(|s| word.ends_with(s)) {
                return PosTag::Verb;
            }
        }
        PosTag::Noun
    }
}

/// Tag a sequence of normalized tokens.
pub fn pos_tag<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> Vec<PosTag> {
    tokens.iter().map(|t| lexicon.tag(t.as_ref())).collect()
}

/// Noun phrases as half-open token index ranges.
///
/// Each maximal run of ADJ/NOUN/NUM tokens is cut after its last NOUN, which
/// realizes the pattern `(ADJ|NOUN|NUM)* NOUN`. Runs without a noun yield
/// nothing.
pub fn chunk_noun_phrases(tags: &[PosTag]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        if !tags[i].is_np_member() {
            i += 1;
            continue;
        }
        let start = i;
        let mut last_noun = None;
        while i < tags.len() && tags[i].is_np_member() {
            if tags[i] == PosTag::Noun {
                last_noun = Some(i);
            }
            i += 1;
        }
        if let Some(end) = last_noun {
            out.push(start..end + 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use PosTag::*;

    #[test]
    fn lexicon_and_rules() {
        let lex = Lexicon::bundled();
        assert_eq!(pos_tag(&["chest", "pain"], &lex), vec![Noun, Noun]);
        assert_eq!(pos_tag(&["no"], &lex), vec![Neg]);
        assert_eq!(pos_tag(&["3"], &lex), vec![Num]);
        assert_eq!(pos_tag(&["38.5", "abdominal", "walking", "quickly", "ideation"], &lex), vec![Num, Adj, Verb, Other, Noun]);
        assert_eq!(pos_tag(&["vomiting", "severe", "denies", "of", "the"], &lex), vec![Noun, Adj, Neg, Prep, Det]);
    }

    #[test]
    fn chunks() {
        assert_eq!(chunk_noun_phrases(&[Adj, Noun, Noun]), vec![0..3]);
        assert_eq!(chunk_noun_phrases(&[Verb, Prep, Noun]), vec![2..3]);
        assert!(chunk_noun_phrases(&[]).is_empty());
        assert_eq!(chunk_noun_phrases(&[Noun, Adj, Verb, Num, Noun, Other, Adj]), vec![0..1, 3..5]);
    }

    #[test]
    fn chunks_never_overlap() {
        let tags = [Noun, Noun, Prep, Adj, Noun, Adj, Det, Noun];
        let chunks = chunk_noun_phrases(&tags);
        for w in chunks.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        for c in &chunks {
            assert_eq!(tags[c.end - 1], Noun);
        }
    }
}
