//! The individual feature-engineering steps.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::sync::LazyLock;

use regex::Regex;

use super::FeatureError;
use crate::cnlp::{ClinicalTag, Dictionary};
use crate::ingest::{count_missing_vitals, TriageEncounter, Vital, VitalSigns};
use crate::rules::{DangerZones, RuleContext, RuleTable};

const BUNDLED_SOCIAL_RISK: &str = include_str!("../../data/social_risk.tsv");

/// Transitive parents of the given tags not already present as tags,
/// deduplicated and sorted.
pub fn derive_parent_features<'a>(tags: impl IntoIterator<Item = &'a ClinicalTag>, dict: &Dictionary) -> BTreeSet<String> {
    let tags: Vec<&ClinicalTag> = tags.into_iter().collect();
    let own: BTreeSet<&str> = tags.iter().map(|t| t.cui.as_str()).collect();
    tags.iter().flat_map(|t| dict.ancestors(&t.cui)).filter(|p| !own.contains(p.as_str())).collect()
}

/// Affirmed reason-for-visit CUIs together with every ancestor.
pub fn affirmed_concepts<'a>(tags: impl IntoIterator<Item = &'a ClinicalTag>, dict: &Dictionary) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for tag in tags.into_iter().filter(|t| !t.negated) {
        out.insert(tag.cui.clone());
        out.extend(dict.ancestors(&tag.cui));
    }
    out
}

/// Rule context for an encounter: cleaned vitals, scalar inputs and concepts.
pub fn rule_context(enc: &TriageEncounter, vitals: &VitalSigns, concepts: BTreeSet<String>, danger: &DangerZones) -> RuleContext {
    RuleContext {
        age: enc.age_years,
        vitals: *vitals,
        pain: enc.pain_score.map(f64::from),
        gcs: enc.gcs.map(f64::from),
        cuis: concepts,
        flags: BTreeSet::new(),
        danger: Some(danger.count(enc.age_years, vitals)),
        resources: None,
    }
}

/// Ids of every satisfied high-risk rule, in table order.
pub fn high_risk_flags(ctx: &RuleContext, rules: &RuleTable) -> Vec<String> {
    rules.all_outcomes(ctx).into_iter().map(str::to_string).collect()
}

static DURATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?ix)
        (?: \d+(?:\.\d+)? | \b(?: one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve
                               |a\s+few|a\s+couple\s+of|a\s+couple|few|several|couple\s+of|couple|a|an )\b )
        \s*-?\s*
        (?P<unit> seconds?|secs?|minutes?|mins?|hours?|hrs?|h|days?|d|weeks?|wks?|w|months?|mos?|years?|yrs?|y )\b
        (?P<tail> \s*-?\s*old)?",
    )
    .expect("duration pattern compiles")
});

/// Time unit of the first duration expression in `text`, e.g. "days" for
/// "x 3 days" or "three days ago". Ages ("5 year old") are skipped.
pub fn bin_duration(text: &str) -> Option<&'static str> {
    DURATION.captures_iter(text).filter(|c| c.name("tail").is_none()).find_map(|c| {
        let unit = c["unit"].to_ascii_lowercase();
        Some(match unit.chars().next()? {
            's' => "seconds",
            'm' if unit.starts_with("mo") => "months",
            'm' => "minutes",
            'h' => "hours",
            'd' => "days",
            'w' => "weeks",
            'y' => "years",
            _ => return None,
        })
    })
}

/// Closed table mapping risk-factor strings and social-history CUIs to a risk
/// category. TSV columns `pattern`, `name`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialRiskTable {
    patterns: BTreeMap<String, String>,
}

impl SocialRiskTable {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_SOCIAL_RISK.as_bytes()).expect("bundled social risk table is valid")
    }

    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut patterns = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("pattern\t")) {
                continue;
            }
            let Some((pattern, name)) = line.split_once('\t') else {
                return Err(FeatureError::Format { table: "social risk", line: idx + 1, message: "expected 2 columns".into() });
            };
            patterns.insert(key(pattern), name.trim().to_string());
        }
        Ok(Self { patterns })
    }

    pub fn category(&self, pattern: &str) -> Option<&str> {
        self.patterns.get(&key(pattern)).map(String::as_str)
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.patterns.values().map(String::as_str).collect()
    }
}

fn key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialRisk {
    pub categories: BTreeSet<String>,
    /// Risk-factor strings outside the table.
    pub unrecognized: usize,
}

/// Risk categories from the encounter's risk-factor list and its affirmed
/// social-history tags.
pub fn social_risk_features<'a>(
    risk_factors: &[String],
    social_tags: impl IntoIterator<Item = &'a ClinicalTag>,
    table: &SocialRiskTable,
) -> SocialRisk {
    let mut out = SocialRisk::default();
    for factor in risk_factors.iter().filter(|f| !f.trim().is_empty()) {
        match table.category(factor) {
            Some(name) => {
                out.categories.insert(name.to_string());
            }
            None => out.unrecognized += 1,
        }
    }
    for tag in social_tags.into_iter().filter(|t| !t.negated) {
        if let Some(name) = table.category(&tag.cui) {
            out.categories.insert(name.to_string());
        }
    }
    out
}

/// Numeric features of one encounter as (id, value) pairs; zero values are
/// left for the caller to drop.
pub fn scalar_features(
    enc: &TriageEncounter,
    vitals: &VitalSigns,
    n_rfv_terms: usize,
    danger: &DangerZones,
) -> Vec<(String, f64)> {
    let mut out = vec![
        ("derived:n_rfv_terms".to_string(), n_rfv_terms as f64),
        ("derived:n_missing_vitals".to_string(), count_missing_vitals(vitals) as f64),
        ("derived:n_risk_zone_vitals".to_string(), danger.count(enc.age_years, vitals) as f64),
    ];
    if let (Some(pain), Some(acceptable)) = (enc.pain_score, enc.acceptable_pain_level) {
        out.push(("derived:pain_above_acceptable".to_string(), f64::from(u8::from(pain > acceptable))));
    }
    for vital in Vital::ALL {
        if let Some(v) = vitals.get(vital) {
            out.push((format!("vital:{}", vital.short_name()), v));
        }
    }
    out.push(("num:age".to_string(), enc.age_years));
    if let Some(p) = enc.pain_score {
        out.push(("num:pain".to_string(), f64::from(p)));
    }
    if let Some(g) = enc.gcs {
        out.push(("num:gcs".to_string(), f64::from(g)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnlp::{Span, TermType};

    fn tag(cui: &str, negated: bool) -> ClinicalTag {
        ClinicalTag {
            cui: cui.into(),
            term: String::new(),
            span: Span::new(0, 0),
            term_type: TermType::ReasonForVisit,
            negated,
            positions: vec![0],
        }
    }

    #[test]
    fn parents_are_deduplicated() {
        let dict = Dictionary::bundled();
        // radiating chest pain -> chest pain -> pain
        let parents = derive_parent_features([&tag("T0002", false)], &dict);
        assert_eq!(parents, BTreeSet::from(["T0001".to_string(), "T0052".to_string()]));
        assert!(derive_parent_features([&tag("T0008", false)], &dict).is_empty());
        let shared = derive_parent_features([&tag("T0021", false), &tag("T0028", false)], &dict);
        assert_eq!(shared, BTreeSet::from(["T0052".to_string()]));
    }

    #[test]
    fn durations() {
        assert_eq!(bin_duration("chest pain x 3 days"), Some("days"));
        assert_eq!(bin_duration("three days ago"), Some("days"));
        assert_eq!(bin_duration("a few days"), Some("days"));
        assert_eq!(bin_duration("cough x3 wks"), Some("weeks"));
        assert_eq!(bin_duration("for 2 hrs then 3 days"), Some("hours"));
        assert_eq!(bin_duration("5 year old with fever for 2 months"), Some("months"));
        assert_eq!(bin_duration("started 10 min ago"), Some("minutes"));
        assert_eq!(bin_duration("chest pain"), None);
        assert_eq!(bin_duration("HR 130"), None);
        assert_eq!(bin_duration("a headache"), None);
    }

    #[test]
    fn social_risk() {
        let table = SocialRiskTable::bundled();
        let r = social_risk_features(&["alcohol abuse".to_string()], [], &table);
        assert_eq!(r.categories, BTreeSet::from(["alcohol".to_string()]));
        assert_eq!(social_risk_features(&[], [], &table), SocialRisk::default());
        let r = social_risk_features(&["likes jazz".to_string()], [], &table);
        assert!(r.categories.is_empty());
        assert_eq!(r.unrecognized, 1);
        let r = social_risk_features(&[], [&tag("T0046", false), &tag("T0045", true)], &table);
        assert_eq!(r.categories, BTreeSet::from(["homelessness".to_string()]));
    }

    #[test]
    fn scalars() {
        let danger = DangerZones::bundled();
        let mut enc = TriageEncounter::new("a", 40.0);
        enc.pain_score = Some(8);
        enc.acceptable_pain_level = Some(4);
        enc.vitals = VitalSigns {
            heart_rate: Some(130.0),
            respiratory_rate: Some(22.0),
            systolic_bp: Some(120.0),
            diastolic_bp: Some(80.0),
            temperature: Some(37.0),
            spo2: Some(98.0),
        };
        let s: BTreeMap<String, f64> = scalar_features(&enc, &enc.vitals, 2, &danger).into_iter().collect();
        assert_eq!(s["derived:pain_above_acceptable"], 1.0);
        assert_eq!(s["derived:n_risk_zone_vitals"], 2.0);
        assert_eq!(s["derived:n_missing_vitals"], 0.0);
        assert_eq!(s["derived:n_rfv_terms"], 2.0);
        assert_eq!(s["vital:hr"], 130.0);
        enc.acceptable_pain_level = None;
        enc.pain_score = Some(4);
        let s: BTreeMap<String, f64> = scalar_features(&enc, &enc.vitals, 0, &danger).into_iter().collect();
        assert!(!s.contains_key("derived:pain_above_acceptable"));
    }
}
