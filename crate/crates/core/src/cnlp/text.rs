//! Sentence splitting, word tokenization and token normalization.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::CnlpError;

const BUNDLED_ABBREVIATIONS: &str = include_str!("../../data/abbreviations.tsv");
const BUNDLED_SENTENCE_GUARDS: &str = include_str!("../../data/sentence_abbreviations.txt");

/// Half-open byte range into a source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

/// Words that end with a period without ending the sentence.
#[derive(Debug, Clone, Default)]
pub struct SentenceGuards(HashSet<String>);

impl SentenceGuards {
    pub fn bundled() -> Self {
        Self::from_lines(BUNDLED_SENTENCE_GUARDS)
    }

    pub fn from_lines(text: &str) -> Self {
        Self(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_lowercase).collect())
    }

    fn guards(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }
}

/// Split text into trimmed sentence spans.
///
/// Terminators are `. ! ? ;` and newlines. A period only terminates when it is
/// followed by whitespace or end of text and the word it closes is not a
/// guarded abbreviation, so decimals like `38.5` and `e.g.` stay intact.
pub fn split_sentences(text: &str, guards: &SentenceGuards) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        let terminal = match c {
            '!' | '?' | ';' | '\n' => true,
            '.' => {
                let next = text[i + 1..].chars().next();
                let at_break = next.is_none_or(char::is_whitespace);
                let word_start = text[..i].rfind(char::is_whitespace).map_or(0, |p| p + 1);
                at_break && !guards.guards(&text[word_start..=i])
            }
            _ => false,
        };
        if terminal {
            let end = i + c.len_utf8();
            push_trimmed(text, start, end, &mut spans);
            start = end;
        }
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<Span>) {
    let slice = &text[start..end];
    let trimmed = slice.trim();
    if !trimmed.chars().any(char::is_alphanumeric) {
        return;
    }
    let s = start + (slice.len() - slice.trim_start().len());
    spans.push(Span::new(s, s + trimmed.len()));
}

/// A word or punctuation token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: Span,
}

impl Token {
    pub fn is_punctuation(&self) -> bool {
        self.text.chars().all(|c| !c.is_alphanumeric())
    }
}

/// Split a sentence into word and punctuation tokens.
///
/// `offset` is the byte offset of `sentence` in its source text; token spans
/// are absolute. Hyphens, slashes and apostrophes between word characters and
/// periods between digits stay inside the word (`x-ray`, `c/o`, `38.5`). A
/// single trailing slash after a one- or two-letter word is kept too (`w/`).
pub fn tokenize(sentence: &str, offset: usize) -> Vec<Token> {
    let chars: Vec<(usize, char)> = sentence.char_indices().collect();
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    let push_word = |tokens: &mut Vec<Token>, from: usize, to: usize| {
        tokens.push(Token { text: sentence[from..to].to_string(), span: Span::new(offset + from, offset + to) });
    };
    for (k, &(pos, c)) in chars.iter().enumerate() {
        let prev = k.checked_sub(1).map(|j| chars[j].1);
        let next = chars.get(k + 1).map(|&(_, n)| n);
        let joins = match c {
            c if c.is_alphanumeric() => true,
            '-' | '/' | '\'' => {
                let between = prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric);
                let short_slash = c == '/' && word_start.is_some_and(|s| pos - s <= 2) && next.is_none_or(|n| n.is_whitespace());
                word_start.is_some() && (between || short_slash)
            }
            '.' => word_start.is_some() && prev.is_some_and(|p| p.is_ascii_digit()) && next.is_some_and(|n| n.is_ascii_digit()),
            _ => false,
        };
        if joins {
            if word_start.is_none() {
                word_start = Some(pos);
            }
            continue;
        }
        if let Some(s) = word_start.take() {
            push_word(&mut tokens, s, pos);
        }
        if !c.is_whitespace() {
            push_word(&mut tokens, pos, pos + c.len_utf8());
        }
    }
    if let Some(s) = word_start {
        push_word(&mut tokens, s, sentence.len());
    }
    tokens
}

/// Clinical abbreviation expansions, keyed by lowercase abbreviation.
#[derive(Debug, Clone, Default)]
pub struct Abbreviations(HashMap<String, String>);

impl Abbreviations {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_ABBREVIATIONS.as_bytes()).expect("bundled abbreviation table is valid")
    }

    /// TSV with columns `abbrev, expansion`; a header row `abbrev ...` is skipped.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, CnlpError> {
        let mut map = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("abbrev\t")) {
                continue;
            }
            let (abbrev, expansion) = line.split_once('\t').ok_or_else(|| CnlpError::Format {
                what: "abbreviation table",
                line: idx + 1,
                message: "expected two tab-separated columns".into(),
            })?;
            map.insert(abbrev.trim().to_lowercase(), expansion.trim().to_lowercase());
        }
        Ok(Self(map))
    }

    pub fn expand(&self, token: &str) -> Option<&str> {
        self.0.get(token).map(String::as_str)
    }
}

/// Lowercase, strip trailing punctuation, then expand abbreviations.
///
/// The result may contain several space-separated words (`sob` becomes
/// `shortness of breath`) or be empty for pure punctuation.
pub fn normalize(token: &str, abbreviations: &Abbreviations) -> String {
    let lower = token.to_lowercase();
    if let Some(exp) = abbreviations.expand(&lower) {
        return exp.to_string();
    }
    let stripped = lower.trim_end_matches(|c: char| !c.is_alphanumeric() && c != '/');
    let stripped = if stripped.ends_with('/') && abbreviations.expand(stripped).is_none() {
        stripped.trim_end_matches('/')
    } else {
        stripped
    };
    match abbreviations.expand(stripped) {
        Some(exp) => exp.to_string(),
        None => stripped.to_string(),
    }
}
