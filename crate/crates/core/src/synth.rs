//! Synthetic triage encounters labeled by a transparent rule oracle.
//!
//! The oracle is an ordered rule table in the high-risk rule grammar with
//! ESI levels as outcomes, plus an expected-resource table:
//!
//! | level | rule |
//! |-------|------|
//! | 1 | lifesaving presentation (arrest, unresponsiveness, anaphylaxis), SpO2 < 85 or GCS ≤ 8 |
//! | 2 | any high-risk flag, any danger-zone vital, or pain ≥ 8 with a risk complaint |
//! | 3 | two or more distinct expected resources |
//! | 4 | one expected resource |
//! | 5 | no expected resources |
//!
//! Each record draws from its own ChaCha8 stream (`seed`, record index), so
//! any shard of the corpus can be generated independently.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::confusion::SUPP_TABLE_2_NURSE_BY_VERIFIED;
use crate::features::engineering::{affirmed_concepts, high_risk_flags, rule_context};
use crate::features::{Featurizer, TextField};
use crate::ingest::{Disposition, Sex, TriageEncounter, Vital, VitalSigns};
use crate::rules::{Condition, RuleError, RuleTable};
use crate::Esi;

const BUNDLED_ORACLE_RULES: &str = include_str!("../data/oracle_rules.tsv");
const BUNDLED_RESOURCES: &str = include_str!("../data/resources.tsv");

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("resource table line {line}: {message}")]
    Resources { line: usize, message: String },
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("generator config: {0}")]
    Config(String),
}

/// Nurse-assigned ESI counts at Site A (records with an ESI).
pub const SITE_A_ESI_COUNTS: [u64; 5] = [191, 8486, 37730, 35531, 5715];

fn normalize(counts: [u64; 5]) -> [f64; 5] {
    let total: u64 = counts.iter().sum();
    counts.map(|c| c as f64 / total as f64)
}

pub fn site_a_distribution() -> [f64; 5] {
    normalize(SITE_A_ESI_COUNTS)
}

/// Verified-ESI marginal of the 19,652 reviewed records.
pub fn verified_distribution() -> [f64; 5] {
    let mut counts = [0u64; 5];
    for row in SUPP_TABLE_2_NURSE_BY_VERIFIED {
        for (v, c) in row.iter().enumerate() {
            counts[v] += c;
        }
    }
    normalize(counts)
}

/// `P(nurse = j | true = i)` at `[i][j]`, from the reviewed nurse-by-verified
/// counts normalized within each verified class.
pub fn default_noise_matrix() -> [[f64; 5]; 5] {
    let mut m = [[0.0; 5]; 5];
    for v in 0..5 {
        let total: u64 = (0..5).map(|n| SUPP_TABLE_2_NURSE_BY_VERIFIED[n][v]).sum();
        for (n, p) in m[v].iter_mut().enumerate() {
            *p = SUPP_TABLE_2_NURSE_BY_VERIFIED[n][v] as f64 / total as f64;
        }
    }
    m
}

pub fn identity_noise_matrix() -> [[f64; 5]; 5] {
    let mut m = [[0.0; 5]; 5];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_records: usize,
    pub seed: u64,
    pub site: String,
    /// Target true-ESI distribution, ESI 1 first.
    pub esi_distribution: [f64; 5],
    /// `noise_matrix[i][j]` is the probability of nurse ESI `j + 1` given true ESI `i + 1`.
    pub noise_matrix: [[f64; 5]; 5],
    pub pediatric_fraction: f64,
    pub female_fraction: f64,
    /// Admission probability per true ESI; everyone else is discharged.
    pub admit_probability: [f64; 5],
    /// Per-vital probability of a missing measurement.
    pub missing_vital_rate: f64,
    /// Fraction of records made unusable (age, ESI, reason or vitals), cycling through the four kinds.
    pub violation_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_records: 10_000,
            seed: 0,
            site: "A".into(),
            esi_distribution: site_a_distribution(),
            noise_matrix: default_noise_matrix(),
            pediatric_fraction: 0.306,
            female_fraction: 0.564,
            admit_probability: [0.85, 0.45, 0.2, 0.04, 0.01],
            missing_vital_rate: 0.02,
            violation_fraction: 0.0,
        }
    }
}

fn is_distribution(p: &[f64]) -> bool {
    p.iter().all(|x| x.is_finite() && *x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-6
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if !is_distribution(&self.esi_distribution) {
            return bad("esi_distribution must be non-negative and sum to 1".into());
        }
        for (i, row) in self.noise_matrix.iter().enumerate() {
            if !is_distribution(row) {
                return bad(format!("noise_matrix row {} must be non-negative and sum to 1", i + 1));
            }
        }
        for (name, p) in [
            ("pediatric_fraction", self.pediatric_fraction),
            ("female_fraction", self.female_fraction),
            ("missing_vital_rate", self.missing_vital_rate),
            ("violation_fraction", self.violation_fraction),
        ] {
            if !is_probability(p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !self.admit_probability.iter().all(|&p| is_probability(p)) {
            return bad("admit_probability entries must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Expected resource types per concept. TSV columns `cui, resources`
/// (comma-separated).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResourceTable {
    by_cui: BTreeMap<String, BTreeSet<String>>,
}

impl ResourceTable {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_RESOURCES.as_bytes()).expect("bundled resource table is valid")
    }

    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, SynthError> {
        let mut by_cui = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("cui\t")) {
                continue;
            }
            let (cui, list) = line
                .split_once('\t')
                .ok_or_else(|| SynthError::Resources { line: idx + 1, message: "expected 2 tab-separated columns".into() })?;
            let resources: BTreeSet<String> = list.split(',').map(|r| r.trim().to_string()).filter(|r| !r.is_empty()).collect();
            by_cui.insert(cui.trim().to_string(), resources);
        }
        Ok(Self { by_cui })
    }

    pub fn resources(&self, cui: &str) -> Option<&BTreeSet<String>> {
        self.by_cui.get(cui)
    }

    /// Distinct resource types needed by a set of concepts.
    pub fn count<'a>(&self, concepts: impl IntoIterator<Item = &'a String>) -> usize {
        let needed: BTreeSet<&String> = concepts.into_iter().filter_map(|c| self.by_cui.get(c)).flatten().collect();
        needed.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleDecision {
    pub esi: Esi,
    pub rule_id: String,
    pub resources: usize,
    pub high_risk_flags: Vec<String>,
}

/// Rule table with ESI-level outcomes whose last rule always matches.
#[derive(Debug, Clone)]
pub struct Oracle {
    rules: RuleTable,
    levels: Vec<Esi>,
    resources: ResourceTable,
}

impl Oracle {
    pub fn bundled() -> Self {
        let rules = RuleTable::from_tsv(BUNDLED_ORACLE_RULES.as_bytes(), "oracle rules").expect("bundled oracle rules are valid");
        Self::new(rules, ResourceTable::bundled()).expect("bundled oracle is total")
    }

    pub fn new(rules: RuleTable, resources: ResourceTable) -> Result<Self, SynthError> {
        let levels = rules
            .rules
            .iter()
            .map(|r| {
                r.outcome
                    .parse::<u8>()
                    .ok()
                    .and_then(Esi::new)
                    .ok_or_else(|| SynthError::Oracle(format!("rule {}: outcome {:?} is not an ESI level", r.id, r.outcome)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if rules.rules.last().map(|r| &r.condition) != Some(&Condition::Always) {
            return Err(SynthError::Oracle("the last rule must be \"always\"".into()));
        }
        Ok(Self { rules, levels, resources })
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    pub fn resources(&self) -> &ResourceTable {
        &self.resources
    }

    /// First matching rule over the encounter's cleaned vitals and affirmed
    /// reason-for-visit concepts.
    pub fn decide(&self, enc: &TriageEncounter, featurizer: &Featurizer) -> OracleDecision {
        let (vitals, _) = featurizer.vital_ranges.clean(&enc.vitals);
        let tags = featurizer.pipeline.extract(&enc.reason_for_visit, Some(TextField::ReasonForVisit.term_type())).tags;
        let concepts = affirmed_concepts(&tags, featurizer.pipeline.dictionary());
        let mut ctx = rule_context(enc, &vitals, concepts, &featurizer.danger_zones);
        let flags = high_risk_flags(&ctx, &featurizer.high_risk);
        let resources = self.resources.count(&ctx.cuis);
        ctx.flags = flags.iter().cloned().collect();
        ctx.resources = Some(resources);
        let idx = self.rules.rules.iter().position(|r| r.condition.holds(&ctx)).expect("last oracle rule always matches");
        OracleDecision { esi: self.levels[idx], rule_id: self.rules.rules[idx].id.clone(), resources, high_risk_flags: flags }
    }
}

pub fn oracle_esi(enc: &TriageEncounter, oracle: &Oracle, featurizer: &Featurizer) -> Esi {
    oracle.decide(enc, featurizer).esi
}

struct Complaint {
    cui: &'static str,
    phrases: &'static [&'static str],
    painful: bool,
}

const fn c(cui: &'static str, phrases: &'static [&'static str], painful: bool) -> Complaint {
    Complaint { cui, phrases, painful }
}

const COMPLAINTS: &[Complaint] = &[
    c("T0001", &["chest pain", "chest tightness", "chest pressure"], true),
    c("T0002", &["radiating chest pain"], true),
    c("T0003", &["shortness of breath", "difficulty breathing"], false),
    c("T0004", &["abdominal pain", "stomach pain", "belly pain"], true),
    c("T0005", &["right lower quadrant pain"], true),
    c("T0006", &["headache"], true),
    c("T0007", &["severe headache", "worst headache"], true),
    c("T0008", &["fever", "high temperature"], false),
    c("T0009", &["cough"], false),
    c("T0010", &["vomiting", "emesis"], false),
    c("T0011", &["nausea"], false),
    c("T0012", &["diarrhea", "loose stools"], false),
    c("T0013", &["seizure", "seizure activity"], false),
    c("T0014", &["syncope", "syncopal episode"], false),
    c("T0015", &["altered mental status", "confusion"], false),
    c("T0016", &["suicidal ideation", "suicidal thoughts"], false),
    c("T0017", &["cardiac arrest"], false),
    c("T0018", &["respiratory arrest"], false),
    c("T0019", &["unresponsiveness"], false),
    c("T0020", &["anaphylaxis", "anaphylactic reaction"], false),
    c("T0021", &["ankle pain"], true),
    c("T0022", &["ankle injury", "ankle sprain"], true),
    c("T0023", &["laceration", "skin tear"], true),
    c("T0024", &["sore throat", "throat pain"], true),
    c("T0025", &["rash", "skin rash"], false),
    c("T0026", &["medication refill", "prescription refill"], false),
    c("T0027", &["insect bite", "bee sting"], true),
    c("T0028", &["back pain"], true),
    c("T0029", &["low back pain", "lower back pain"], true),
    c("T0030", &["dysuria", "painful urination"], true),
    c("T0031", &["ear pain", "earache"], true),
    c("T0032", &["dizziness", "lightheadedness"], false),
    c("T0033", &["weakness", "generalized weakness"], false),
    c("T0034", &["palpitations"], false),
    c("T0035", &["flank pain"], true),
    c("T0047", &["blurred vision"], false),
    c("T0048", &["nasal congestion", "runny nose"], false),
    c("T0049", &["dental pain", "toothache"], true),
    c("T0050", &["wrist injury", "wrist sprain"], true),
    c("T0057", &["mechanical fall"], true),
    c("T0058", &["head injury"], true),
    c("T0059", &["loss of consciousness"], false),
    c("T0063", &["allergic reaction"], false),
    c("T0064", &["swelling"], true),
    c("T0065", &["numbness"], false),
    c("T0066", &["eye pain"], true),
    c("T0068", &["overdose", "drug overdose"], false),
    c("T0069", &["bleeding"], false),
];

const LIFESAVING: &[&str] = &["T0017", "T0018", "T0019", "T0020"];
const HIGH_RISK: &[&str] = &["T0001", "T0002", "T0013", "T0015", "T0016", "T0059", "T0068"];
const SEVERE_PAIN_RISK: &[&str] = &["T0004", "T0005", "T0007", "T0035"];
const TWO_RESOURCE: &[&str] = &["T0003", "T0004", "T0005", "T0035", "T0007", "T0014", "T0034"];
const ONE_RESOURCE: &[&str] = &[
    "T0008", "T0009", "T0010", "T0012", "T0022", "T0050", "T0023", "T0030", "T0058", "T0057", "T0069", "T0063", "T0032", "T0033",
];
const NO_RESOURCE: &[&str] = &[
    "T0024", "T0025", "T0026", "T0027", "T0048", "T0049", "T0031", "T0021", "T0028", "T0029", "T0006", "T0011", "T0064", "T0065",
    "T0047", "T0066",
];
const NEGATED_DISTRACTORS: &[&str] = &["T0001", "T0003", "T0004", "T0006", "T0008", "T0010", "T0011", "T0059"];

const MEDICAL_HISTORY: &[&str] = &["hypertension", "diabetes", "asthma", "myocardial infarction", "stroke", "gallstones"];
const SURGICAL_HISTORY: &[&str] = &["appendectomy", "cholecystectomy", "knee replacement", "hip replacement"];
const SOCIAL_HISTORY: &[&str] = &["tobacco use", "alcohol abuse", "drug abuse", "homelessness", "denies tobacco use"];
const MEDICATIONS: &[&str] = &["lisinopril", "metformin", "aspirin", "albuterol inhaler"];
const RISK_FACTORS: &[&str] = &["smoker", "etoh", "homeless", "ivdu", "frequent visitor"];
const DURATION_UNITS: &[&str] = &["hours", "days", "weeks"];

const MAX_ATTEMPTS: usize = 64;

fn complaint(cui: &str) -> &'static Complaint {
    COMPLAINTS.iter().find(|c| c.cui == cui).expect("complaint catalogue covers every pool")
}

/// A generated record with the concepts planted in its reason-for-visit
/// text as `(cui, negated)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedRecord {
    pub encounter: TriageEncounter,
    pub planted: Vec<(String, bool)>,
    pub oracle: OracleDecision,
    /// Whether the record was made unusable on purpose.
    pub violation: bool,
}

struct Plan {
    affirmed: Vec<&'static str>,
    danger_vital: Option<Vital>,
    pain: Option<u8>,
    gcs: Option<u8>,
    spo2: Option<f64>,
}

fn plan(target: usize, rng: &mut ChaCha8Rng) -> Plan {
    let pick = |pool: &[&'static str], rng: &mut ChaCha8Rng| *pool.choose(rng).expect("non-empty pool");
    let mut p = Plan { affirmed: Vec::new(), danger_vital: None, pain: None, gcs: None, spo2: None };
    match target {
        0 => {
            let route = rng.random_range(0..20);
            if route < 15 {
                p.affirmed.push(pick(LIFESAVING, rng));
            } else if route < 18 {
                p.affirmed.push("T0003");
                p.spo2 = Some(f64::from(rng.random_range(75..85)));
            } else {
                p.affirmed.push("T0015");
                p.gcs = Some(rng.random_range(3..=8));
            }
            if rng.random_bool(0.5) {
                p.danger_vital = Some(*[Vital::HeartRate, Vital::SystolicBp, Vital::RespiratoryRate].choose(rng).unwrap());
            }
        }
        1 => {
            let route = rng.random_range(0..20);
            if route < 9 {
                p.affirmed.push(pick(HIGH_RISK, rng));
                if p.affirmed[0] == "T0015" {
                    p.gcs = Some(rng.random_range(10..=13));
                }
            } else if route < 16 {
                let pool = [TWO_RESOURCE, ONE_RESOURCE, NO_RESOURCE][rng.random_range(0..3)];
                p.affirmed.push(pick(pool, rng));
                p.danger_vital = Some(*Vital::ALL.choose(rng).unwrap());
            } else {
                p.affirmed.push(pick(SEVERE_PAIN_RISK, rng));
                p.pain = Some(rng.random_range(8..=10));
            }
        }
        2 => {
            if rng.random_bool(0.6) {
                p.affirmed.push(pick(TWO_RESOURCE, rng));
            } else {
                let first = pick(ONE_RESOURCE, rng);
                let second = pick(ONE_RESOURCE, rng);
                p.affirmed.extend([first, second]);
            }
        }
        3 => {
            p.affirmed.push(pick(ONE_RESOURCE, rng));
            if rng.random_bool(0.4) {
                p.affirmed.push(pick(NO_RESOURCE, rng));
            }
        }
        _ => {
            p.affirmed.push(pick(NO_RESOURCE, rng));
            if rng.random_bool(0.3) {
                p.affirmed.push(pick(NO_RESOURCE, rng));
            }
        }
    }
    p.affirmed.dedup();
    if p.pain.is_none() && p.affirmed.iter().any(|c| complaint(c).painful) {
        let max = if target >= 3 { 9 } else { 7 };
        p.pain = Some(rng.random_range(1..=max));
    }
    p
}

fn round_vital(vital: Vital, value: f64, up: bool) -> f64 {
    let scale = if vital == Vital::Temperature { 10.0 } else { 1.0 };
    if up {
        (value * scale).ceil() / scale
    } else {
        (value * scale).floor() / scale
    }
}

fn sample_vitals(age: f64, p: &Plan, featurizer: &Featurizer, missing_rate: f64, rng: &mut ChaCha8Rng) -> VitalSigns {
    let mut vitals = VitalSigns::default();
    for vital in Vital::ALL {
        let Some(band) = featurizer.danger_zones.band(age, vital) else { continue };
        let w = band.high - band.low;
        let value = if p.danger_vital == Some(vital) {
            let high_side = vital != Vital::Spo2 && rng.random_bool(0.5);
            if vital == Vital::Spo2 {
                f64::from(rng.random_range(85..band.low as i32))
            } else if high_side {
                round_vital(vital, band.high + w * rng.random_range(0.05..0.35), true)
            } else {
                round_vital(vital, band.low - w * rng.random_range(0.05..0.25), false)
            }
        } else if vital == Vital::Spo2 && p.spo2.is_some() {
            p.spo2.unwrap()
        } else {
            let v = rng.random_range(band.low + 0.15 * w..=band.high - 0.15 * w);
            let scale = if vital == Vital::Temperature { 10.0 } else { 1.0 };
            (v * scale).round() / scale
        };
        let keep = p.danger_vital == Some(vital) || (vital == Vital::Spo2 && p.spo2.is_some()) || !rng.random_bool(missing_rate);
        if keep {
            vitals.set(vital, Some(value));
        }
    }
    vitals
}

fn phrase(cui: &str, rng: &mut ChaCha8Rng) -> &'static str {
    complaint(cui).phrases.choose(rng).expect("every complaint has a phrase")
}

fn duration(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", rng.random_range(2..10), DURATION_UNITS.choose(rng).unwrap())
}

fn reason_text(p: &Plan, negated: Option<&str>, rng: &mut ChaCha8Rng) -> String {
    let mut sentences = Vec::new();
    let main = phrase(p.affirmed[0], rng);
    sentences.push(match rng.random_range(0..4) {
        0 => format!("{main}."),
        1 => format!("{main} for {}.", duration(rng)),
        2 => format!("Patient reports {main} for {}.", duration(rng)),
        _ => format!("Patient with {main}."),
    });
    for cui in &p.affirmed[1..] {
        sentences.push(format!("Also reports {}.", phrase(cui, rng)));
    }
    if let Some(cui) = negated {
        let n = phrase(cui, rng);
        sentences.push(if rng.random_bool(0.5) { format!("Denies {n}.") } else { format!("No {n}.") });
    }
    let mut text = sentences.join(" ");
    if let Some(first) = text.get(..1) {
        text = first.to_uppercase() + &text[1..];
    }
    text
}

fn pick_list(pool: &[&str], max: usize, rng: &mut ChaCha8Rng) -> String {
    let k = rng.random_range(0..=max);
    let mut items: Vec<&str> = pool.choose_multiple(rng, k).copied().collect();
    items.sort_unstable();
    items.join(", ")
}

fn build(
    config: &GeneratorConfig,
    index: usize,
    target: usize,
    rng: &mut ChaCha8Rng,
    featurizer: &Featurizer,
) -> (TriageEncounter, Vec<(String, bool)>) {
    let age = if rng.random_bool(config.pediatric_fraction) {
        f64::from(rng.random_range(1..18))
    } else {
        f64::from(rng.random_range(18..96))
    };
    let p = plan(target, rng);
    let negated = if rng.random_bool(0.5) {
        let pool: Vec<&str> = NEGATED_DISTRACTORS.iter().copied().filter(|c| !p.affirmed.contains(c)).collect();
        pool.choose(rng).copied()
    } else {
        None
    };
    let mut enc = TriageEncounter::new(format!("{}-{index:06}", if config.site.is_empty() { "syn" } else { &config.site }), age);
    enc.site = config.site.clone();
    enc.sex = if rng.random_bool(config.female_fraction) { Sex::Female } else { Sex::Male };
    let ambulance = [0.8, 0.4, 0.15, 0.05, 0.02][target];
    enc.arrival_mode = if rng.random_bool(ambulance) { "ambulance" } else { "walk-in" }.into();
    enc.arrived_from = ["home", "home", "home", "home", "nursing facility", "clinic"].choose(rng).unwrap().to_string();
    enc.vitals = sample_vitals(age, &p, featurizer, config.missing_vital_rate, rng);
    enc.pain_score = p.pain.or_else(|| rng.random_bool(0.3).then_some(0));
    if enc.pain_score.is_some() && rng.random_bool(0.5) {
        enc.acceptable_pain_level = Some(rng.random_range(2..=4));
    }
    enc.gcs = p.gcs.or_else(|| rng.random_bool(0.5).then_some(15));
    enc.reason_for_visit = reason_text(&p, negated, rng);
    enc.medical_history = pick_list(MEDICAL_HISTORY, 2, rng);
    enc.surgical_history = pick_list(SURGICAL_HISTORY, 1, rng);
    enc.social_history = pick_list(SOCIAL_HISTORY, 1, rng);
    enc.medications = pick_list(MEDICATIONS, 2, rng);
    let n_risk = rng.random_range(0..=1);
    enc.risk_factors = RISK_FACTORS.choose_multiple(rng, n_risk).map(|s| s.to_string()).collect();
    let mut planted: Vec<(String, bool)> = p.affirmed.iter().map(|c| (c.to_string(), false)).collect();
    planted.extend(negated.map(|c| (c.to_string(), true)));
    (enc, planted)
}

fn generate_record(
    config: &GeneratorConfig,
    index: usize,
    oracle: &Oracle,
    featurizer: &Featurizer,
    target_dist: &WeightedIndex<f64>,
    noise: &[WeightedIndex<f64>],
) -> GeneratedRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let target = target_dist.sample(&mut rng);
    let mut attempt = build(config, index, target, &mut rng, featurizer);
    let mut decision = oracle.decide(&attempt.0, featurizer);
    for _ in 1..MAX_ATTEMPTS {
        if decision.esi.class() == target {
            break;
        }
        attempt = build(config, index, target, &mut rng, featurizer);
        decision = oracle.decide(&attempt.0, featurizer);
    }
    let (mut enc, planted) = attempt;
    let truth = decision.esi;
    enc.gold_esi = Some(truth);
    enc.nurse_esi = Some(Esi::ALL[noise[truth.class()].sample(&mut rng)]);
    enc.disposition =
        Some(if rng.random_bool(config.admit_probability[truth.class()]) { Disposition::Admit } else { Disposition::Discharge });
    GeneratedRecord { encounter: enc, planted, oracle: decision, violation: false }
}

/// Records `[start, start + len)` of the corpus defined by `config`.
pub fn generate_shard(
    config: &GeneratorConfig,
    oracle: &Oracle,
    featurizer: &Featurizer,
    start: usize,
    len: usize,
) -> Result<Vec<GeneratedRecord>, SynthError> {
    config.validate()?;
    let target = WeightedIndex::new(config.esi_distribution).map_err(|e| SynthError::Config(e.to_string()))?;
    let noise = config
        .noise_matrix
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(|e| SynthError::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let end = (start + len).min(config.n_records);
    let violations = violation_kinds(config);
    Ok((start..end.max(start))
        .into_par_iter()
        .map(|i| {
            let mut rec = generate_record(config, i, oracle, featurizer, &target, &noise);
            if let Some(&kind) = violations.get(&i) {
                inject_violation(&mut rec.encounter, kind);
                rec.violation = true;
            }
            rec
        })
        .collect())
}

/// Record index to violation kind for the `round(n * violation_fraction)`
/// records drawn on a dedicated stream.
fn violation_kinds(config: &GeneratorConfig) -> BTreeMap<usize, usize> {
    let k = ((config.n_records as f64) * config.violation_fraction).round() as usize;
    if k == 0 {
        return BTreeMap::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let mut chosen = rand::seq::index::sample(&mut rng, config.n_records, k.min(config.n_records)).into_vec();
    chosen.sort_unstable();
    chosen.into_iter().enumerate().map(|(j, i)| (i, j % 4)).collect()
}

fn inject_violation(enc: &mut TriageEncounter, kind: usize) {
    match kind {
        0 => enc.age_years = 0.5,
        1 => enc.nurse_esi = None,
        2 => enc.reason_for_visit.clear(),
        _ => enc.vitals = VitalSigns::default(),
    }
}

pub fn generate_detailed(config: &GeneratorConfig) -> Result<Vec<GeneratedRecord>, SynthError> {
    generate_shard(config, &Oracle::bundled(), &Featurizer::bundled(), 0, config.n_records)
}

/// The full corpus: true ESI in `gold_esi`, noised `nurse_esi`, disposition.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<TriageEncounter>, SynthError> {
    Ok(generate_detailed(config)?.into_iter().map(|r| r.encounter).collect())
}
