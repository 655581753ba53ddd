//! UMLS-style concept dictionary: normalized term → concept, plus parent links.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CnlpError;

const BUNDLED_DICTIONARY: &str = include_str!("../../data/dictionary.tsv");

/// Clinical term categories used to break down tag evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermType {
    Orientation,
    PrimaryPainOnset,
    ReasonForVisit,
    PreviousIllness,
    Surgeries,
    PrimaryPainQuality,
    PrimaryPainLocation,
    LevelOfConsciousness,
    AffectBehavior,
    PrimaryPainLocationDetail,
    PriorToArrival,
    RespiratoryStatus,
    TriageTreatment,
    FamilyHistory,
    Problems,
    Menstrual,
    PrimaryPainRadiationLocation,
    PrimaryPainRadiationLocationDetail,
    PrimaryPainAggravatingFactors,
    PrimaryPainAssociatedSymptoms,
    MedicalDevices,
}

impl TermType {
    pub const ALL: [TermType; 21] = [
        TermType::Orientation,
        TermType::PrimaryPainOnset,
        TermType::ReasonForVisit,
        TermType::PreviousIllness,
        TermType::Surgeries,
        TermType::PrimaryPainQuality,
        TermType::PrimaryPainLocation,
        TermType::LevelOfConsciousness,
        TermType::AffectBehavior,
        TermType::PrimaryPainLocationDetail,
        TermType::PriorToArrival,
        TermType::RespiratoryStatus,
        TermType::TriageTreatment,
        TermType::FamilyHistory,
        TermType::Problems,
        TermType::Menstrual,
        TermType::PrimaryPainRadiationLocation,
        TermType::PrimaryPainRadiationLocationDetail,
        TermType::PrimaryPainAggravatingFactors,
        TermType::PrimaryPainAssociatedSymptoms,
        TermType::MedicalDevices,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TermType::Orientation => "Orientation",
            TermType::PrimaryPainOnset => "Primary pain onset",
            TermType::ReasonForVisit => "Reason for visit",
            TermType::PreviousIllness => "Previous illness",
            TermType::Surgeries => "Surgeries",
            TermType::PrimaryPainQuality => "Primary pain quality",
            TermType::PrimaryPainLocation => "Primary pain location",
            TermType::LevelOfConsciousness => "Level of consciousness",
            TermType::AffectBehavior => "Affect behavior",
            TermType::PrimaryPainLocationDetail => "Primary pain location detail",
            TermType::PriorToArrival => "Prior to arrival",
            TermType::RespiratoryStatus => "Respiratory status",
            TermType::TriageTreatment => "Triage treatment",
            TermType::FamilyHistory => "Family history",
            TermType::Problems => "Problems",
            TermType::Menstrual => "Menstrual",
            TermType::PrimaryPainRadiationLocation => "Primary pain radiation location",
            TermType::PrimaryPainRadiationLocationDetail => "Primary pain radiation location detail",
            TermType::PrimaryPainAggravatingFactors => "Primary pain aggravating factors",
            TermType::PrimaryPainAssociatedSymptoms => "Primary pain associated symptoms",
            TermType::MedicalDevices => "Medical devices",
        }
    }
}

impl fmt::Display for TermType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TermType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        TermType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| format!("unknown term type {wanted:?}"))
    }
}

impl Serialize for TermType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TermType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub cui: String,
    pub preferred_term: String,
}

/// Lowercase, strip punctuation (hyphens and slashes between word characters
/// are kept), collapse whitespace to single spaces.
pub fn normalize_key(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut cleaned = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else if i > 0
            && i + 1 < chars.len()
            && (((c == '-' || c == '/' || c == '\'') && chars[i - 1].is_alphanumeric() && chars[i + 1].is_alphanumeric())
                || (c == '.' && chars[i - 1].is_ascii_digit() && chars[i + 1].is_ascii_digit()))
        {
            cleaned.push(c);
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Immutable concept dictionary.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    entries: HashMap<String, String>,
    concepts: BTreeMap<String, Concept>,
    relations: BTreeMap<String, Vec<String>>,
    term_types: BTreeMap<String, TermType>,
}

impl Dictionary {
    /// The bundled test dictionary.
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_DICTIONARY.as_bytes()).expect("bundled dictionary is valid")
    }

    /// Parse the TSV format `cui, preferred_term, synonym, term_type, parent_cui`.
    ///
    /// A header row starting with `cui` and lines starting with `#` are skipped.
    /// Several rows may share a CUI (one per synonym); parents are unioned.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, CnlpError> {
        let mut dict = Dictionary::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') || (lineno == 1 && line.starts_with("cui\t")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 4 {
                return Err(CnlpError::Format {
                    what: "dictionary",
                    line: lineno,
                    message: "expected at least 4 columns".into(),
                });
            }
            let bad = |message: String| CnlpError::Format { what: "dictionary", line: lineno, message };
            let cui = cols[0].trim();
            if cui.is_empty() {
                return Err(bad("empty cui".into()));
            }
            let term_type: TermType = cols[3].parse().map_err(bad)?;
            let key = normalize_key(cols[2]);
            if key.is_empty() {
                return Err(bad("empty synonym".into()));
            }
            if let Some(existing) = dict.entries.get(&key) {
                if existing != cui {
                    return Err(bad(format!("term {key:?} maps to both {existing} and {cui}")));
                }
            }
            dict.entries.insert(key, cui.to_string());
            dict.concepts
                .entry(cui.to_string())
                .or_insert_with(|| Concept { cui: cui.to_string(), preferred_term: cols[1].trim().to_string() });
            dict.term_types.insert(cui.to_string(), term_type);
            let parents = dict.relations.entry(cui.to_string()).or_default();
            if let Some(raw) = cols.get(4) {
                for parent in raw.split('|').map(str::trim).filter(|p| !p.is_empty()) {
                    if !parents.iter().any(|p| p == parent) {
                        parents.push(parent.to_string());
                    }
                }
            }
        }
        dict.validate_relations()?;
        Ok(dict)
    }

    fn validate_relations(&self) -> Result<(), CnlpError> {
        for parents in self.relations.values() {
            for parent in parents {
                if !self.concepts.contains_key(parent) {
                    return Err(CnlpError::UnknownParent(parent.clone()));
                }
            }
        }
        // Iterative DFS colouring: 0 unvisited, 1 on stack, 2 done.
        let mut state: HashMap<&str, u8> = HashMap::new();
        for start in self.concepts.keys() {
            if state.get(start.as_str()).copied().unwrap_or(0) != 0 {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
            state.insert(start.as_str(), 1);
            while let Some((node, next)) = stack.pop() {
                let parents = self.relations.get(node).map(Vec::as_slice).unwrap_or(&[]);
                if next < parents.len() {
                    stack.push((node, next + 1));
                    let child = parents[next].as_str();
                    match state.get(child).copied().unwrap_or(0) {
                        0 => {
                            state.insert(child, 1);
                            stack.push((child, 0));
                        }
                        1 => return Err(CnlpError::Cycle(child.to_string())),
                        _ => {}
                    }
                } else {
                    state.insert(node, 2);
                }
            }
        }
        Ok(())
    }

    /// Concept for an already-normalized key.
    pub fn lookup(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains_cui(&self, cui: &str) -> bool {
        self.concepts.contains_key(cui)
    }

    pub fn concept(&self, cui: &str) -> Option<&Concept> {
        self.concepts.get(cui)
    }

    pub fn term_type(&self, cui: &str) -> Option<TermType> {
        self.term_types.get(cui).copied()
    }

    pub fn parents(&self, cui: &str) -> &[String] {
        self.relations.get(cui).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All transitive ancestors of `cui`, excluding itself.
    pub fn ancestors(&self, cui: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&str> = self.parents(cui).iter().map(String::as_str).collect();
        while let Some(next) = stack.pop() {
            if out.insert(next.to_string()) {
                stack.extend(self.parents(next).iter().map(String::as_str));
            }
        }
        out
    }

    /// Normalized term keys, sorted.
    pub fn keys(&self) -> Vec<&str> {
        let mut keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        keys.sort_unstable();
        keys
    }

    /// `(key, cui)` pairs, sorted by key.
    pub fn entries(&self) -> Vec<(&str, &str)> {
        let mut out: Vec<(&str, &str)> = self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        out.sort_unstable();
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert a synonym; used to build test dictionaries.
    pub fn insert(&mut self, term: &str, cui: &str, preferred_term: &str, term_type: TermType) {
        self.entries.insert(normalize_key(term), cui.to_string());
        self.concepts
            .entry(cui.to_string())
            .or_insert_with(|| Concept { cui: cui.to_string(), preferred_term: preferred_term.to_string() });
        self.term_types.insert(cui.to_string(), term_type);
        self.relations.entry(cui.to_string()).or_default();
    }
}
