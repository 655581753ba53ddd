//! Encounter data model, JSON Lines parsing and record filtering.
//!
//! One encounter per line, field names as in [`TriageEncounter`]. Absent
//! fields mean "missing". The normative schema lives in
//! `docs/encounter.schema.json`.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Esi;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read encounter stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to write encounter: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Discharge,
    Admit,
    Other,
}

impl Disposition {
    pub const ALL: [Disposition; 3] = [Disposition::Discharge, Disposition::Admit, Disposition::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Discharge => "discharge",
            Disposition::Admit => "admit",
            Disposition::Other => "other",
        }
    }
}

/// Vital signs recorded at triage. `None` means not recorded.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitalSigns {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heart_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub respiratory_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub systolic_bp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diastolic_bp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spo2: Option<f64>,
}

/// The six vital sign fields, in the order used by every per-vital table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vital {
    HeartRate,
    RespiratoryRate,
    SystolicBp,
    DiastolicBp,
    Temperature,
    Spo2,
}

impl Vital {
    pub const ALL: [Vital; 6] =
        [Vital::HeartRate, Vital::RespiratoryRate, Vital::SystolicBp, Vital::DiastolicBp, Vital::Temperature, Vital::Spo2];

    /// Short name used in feature ids and config tables.
    pub fn short_name(self) -> &'static str {
        match self {
            Vital::HeartRate => "hr",
            Vital::RespiratoryRate => "rr",
            Vital::SystolicBp => "sbp",
            Vital::DiastolicBp => "dbp",
            Vital::Temperature => "temp",
            Vital::Spo2 => "spo2",
        }
    }

    pub fn from_short_name(name: &str) -> Option<Self> {
        Vital::ALL.into_iter().find(|v| v.short_name() == name)
    }
}

impl VitalSigns {
    pub fn get(&self, vital: Vital) -> Option<f64> {
        match vital {
            Vital::HeartRate => self.heart_rate,
            Vital::RespiratoryRate => self.respiratory_rate,
            Vital::SystolicBp => self.systolic_bp,
            Vital::DiastolicBp => self.diastolic_bp,
            Vital::Temperature => self.temperature,
            Vital::Spo2 => self.spo2,
        }
    }

    pub fn set(&mut self, vital: Vital, value: Option<f64>) {
        let slot = match vital {
            Vital::HeartRate => &mut self.heart_rate,
            Vital::RespiratoryRate => &mut self.respiratory_rate,
            Vital::SystolicBp => &mut self.systolic_bp,
            Vital::DiastolicBp => &mut self.diastolic_bp,
            Vital::Temperature => &mut self.temperature,
            Vital::Spo2 => &mut self.spo2,
        };
        *slot = value;
    }
}

/// Number of absent fields among the six vitals.
pub fn count_missing_vitals(vitals: &VitalSigns) -> usize {
    Vital::ALL.iter().filter(|&&v| vitals.get(v).is_none()).count()
}

/// Physiologic plausibility bounds (inclusive). Values outside are outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalRanges {
    pub heart_rate: (f64, f64),
    pub respiratory_rate: (f64, f64),
    pub systolic_bp: (f64, f64),
    pub diastolic_bp: (f64, f64),
    pub temperature: (f64, f64),
    pub spo2: (f64, f64),
}

impl Default for VitalRanges {
    fn default() -> Self {
        Self {
            heart_rate: (20.0, 300.0),
            respiratory_rate: (2.0, 80.0),
            systolic_bp: (40.0, 300.0),
            diastolic_bp: (10.0, 200.0),
            temperature: (30.0, 45.0),
            spo2: (50.0, 100.0),
        }
    }
}

impl VitalRanges {
    pub fn bounds(&self, vital: Vital) -> (f64, f64) {
        match vital {
            Vital::HeartRate => self.heart_rate,
            Vital::RespiratoryRate => self.respiratory_rate,
            Vital::SystolicBp => self.systolic_bp,
            Vital::DiastolicBp => self.diastolic_bp,
            Vital::Temperature => self.temperature,
            Vital::Spo2 => self.spo2,
        }
    }

    pub fn is_plausible(&self, vital: Vital, value: f64) -> bool {
        let (lo, hi) = self.bounds(vital);
        value.is_finite() && value >= lo && value <= hi
    }

    /// Copy of `vitals` with implausible values nulled, plus the outlier count.
    pub fn clean(&self, vitals: &VitalSigns) -> (VitalSigns, usize) {
        let mut out = *vitals;
        let mut outliers = 0;
        for vital in Vital::ALL {
            if let Some(value) = vitals.get(vital) {
                if !self.is_plausible(vital, value) {
                    out.set(vital, None);
                    outliers += 1;
                }
            }
        }
        (out, outliers)
    }
}

/// One patient presentation at triage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriageEncounter {
    pub id: String,
    pub age_years: f64,
    #[serde(default)]
    pub sex: Sex,
    #[serde(default)]
    pub arrival_mode: String,
    #[serde(default)]
    pub arrived_from: String,
    #[serde(default)]
    pub vitals: VitalSigns,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pain_score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptable_pain_level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gcs: Option<u8>,
    #[serde(default)]
    pub reason_for_visit: String,
    #[serde(default)]
    pub medical_history: String,
    #[serde(default)]
    pub surgical_history: String,
    #[serde(default)]
    pub social_history: String,
    #[serde(default)]
    pub medications: String,
    #[serde(default)]
    pub risk_factors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nurse_esi: Option<Esi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified_esi: Option<Esi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_esi: Option<Esi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disposition: Option<Disposition>,
    #[serde(default)]
    pub site: String,
}

impl TriageEncounter {
    /// Minimal encounter with the given id and age; everything else missing.
    pub fn new(id: impl Into<String>, age_years: f64) -> Self {
        Self {
            id: id.into(),
            age_years,
            sex: Sex::Unknown,
            arrival_mode: String::new(),
            arrived_from: String::new(),
            vitals: VitalSigns::default(),
            pain_score: None,
            acceptable_pain_level: None,
            gcs: None,
            reason_for_visit: String::new(),
            medical_history: String::new(),
            surgical_history: String::new(),
            social_history: String::new(),
            medications: String::new(),
            risk_factors: Vec::new(),
            nurse_esi: None,
            verified_esi: None,
            gold_esi: None,
            disposition: None,
            site: String::new(),
        }
    }

    /// Label used for training: verified where reviewed, nurse otherwise.
    pub fn training_label(&self) -> Option<Esi> {
        self.verified_esi.or(self.nurse_esi)
    }

    pub fn is_pediatric(&self) -> bool {
        self.age_years < 18.0
    }

    fn validate(&self) -> Result<(), String> {
        if !self.age_years.is_finite() || self.age_years < 0.0 {
            return Err(format!("age_years must be a non-negative number, got {}", self.age_years));
        }
        for (name, value) in [("pain_score", self.pain_score), ("acceptable_pain_level", self.acceptable_pain_level)] {
            if let Some(v) = value {
                if v > 10 {
                    return Err(format!("{name} must be 0-10, got {v}"));
                }
            }
        }
        if let Some(gcs) = self.gcs {
            if !(3..=15).contains(&gcs) {
                return Err(format!("gcs must be 3-15, got {gcs}"));
            }
        }
        if self.id.is_empty() {
            return Err("id must not be empty".into());
        }
        Ok(())
    }
}

/// A malformed input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Default)]
pub struct ParsedEncounters {
    pub encounters: Vec<TriageEncounter>,
    pub errors: Vec<ParseError>,
}

/// Parse a JSON Lines stream. Blank lines are skipped; every other line either
/// yields an encounter or a [`ParseError`] naming the line.
pub fn parse_encounters<R: BufRead>(reader: R) -> Result<ParsedEncounters, IngestError> {
    let mut parsed = ParsedEncounters::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        match serde_json::from_str::<TriageEncounter>(&line) {
            Ok(enc) => match enc.validate() {
                Ok(()) => parsed.encounters.push(enc),
                Err(message) => parsed.errors.push(ParseError { line: lineno, message }),
            },
            Err(err) => parsed.errors.push(ParseError { line: lineno, message: err.to_string() }),
        }
    }
    Ok(parsed)
}

pub fn write_encounters<W: Write>(mut writer: W, encounters: &[TriageEncounter]) -> Result<(), IngestError> {
    for enc in encounters {
        serde_json::to_writer(&mut writer, enc)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Why a record was excluded from the usable set. Checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    AgeUnderOne,
    MissingEsi,
    MissingReasonForVisit,
    MissingVitals,
}

impl RemovalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalReason::AgeUnderOne => "age under 1",
            RemovalReason::MissingEsi => "missing ESI",
            RemovalReason::MissingReasonForVisit => "missing reason for visit",
            RemovalReason::MissingVitals => "missing vitals",
        }
    }
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Vitals at or above this many missing (after outlier removal) exclude a record.
pub const MAX_MISSING_VITALS: usize = 4;

/// First matching removal reason, or `None` when the record is usable.
pub fn removal_reason(enc: &TriageEncounter, ranges: &VitalRanges) -> Option<RemovalReason> {
    if enc.age_years < 1.0 {
        return Some(RemovalReason::AgeUnderOne);
    }
    if enc.nurse_esi.is_none() {
        return Some(RemovalReason::MissingEsi);
    }
    if enc.reason_for_visit.trim().is_empty() {
        return Some(RemovalReason::MissingReasonForVisit);
    }
    let (clean, _) = ranges.clean(&enc.vitals);
    if count_missing_vitals(&clean) >= MAX_MISSING_VITALS {
        return Some(RemovalReason::MissingVitals);
    }
    None
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub usable: Vec<TriageEncounter>,
    pub removed: Vec<(TriageEncounter, RemovalReason)>,
}

impl FilterOutcome {
    pub fn removal_fraction(&self) -> f64 {
        let total = self.usable.len() + self.removed.len();
        if total == 0 {
            0.0
        } else {
            self.removed.len() as f64 / total as f64
        }
    }
}

/// Partition encounters into usable records and removed records with reasons.
pub fn filter_usable(encounters: Vec<TriageEncounter>, ranges: &VitalRanges) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for enc in encounters {
        match removal_reason(&enc, ranges) {
            Some(reason) => out.removed.push((enc, reason)),
            None => out.usable.push(enc),
        }
    }
    out
}
