//! Condition tables shared by the high-risk flag rules and the synthetic ESI
//! oracle, plus the age-banded danger-zone vital table.
//!
//! Rule tables are TSV with columns `rule_id`, `outcome`, `condition`:
//!
//! ```text
//! condition := "always" | clause (" & " clause)*
//! clause    := var op number          var: age hr rr sbp dbp temp spo2 pain gcs danger resources
//!            | "cui=" CUI ("|" CUI)*   any listed concept present (affirmed, parents included)
//!            | "flag=" (id | "any")    a high-risk flag is present
//! op        := < <= > >= == !=
//! ```
//!
//! A numeric clause over a missing value is false. Rows sharing an outcome act
//! as a disjunction.

use std::collections::BTreeSet;
use std::io::BufRead;

use thiserror::Error;

use crate::ingest::{Vital, VitalSigns};

const BUNDLED_HIGH_RISK: &str = include_str!("../data/high_risk_rules.tsv");
const BUNDLED_DANGER_ZONES: &str = include_str!("../data/danger_zones.tsv");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{table} line {line}: {message}")]
    Parse { table: &'static str, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Age,
    Vital(Vital),
    Pain,
    Gcs,
    Danger,
    Resources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Op {
    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            Op::Lt => a < b,
            Op::Le => a <= b,
            Op::Gt => a > b,
            Op::Ge => a >= b,
            Op::Eq => a == b,
            Op::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    Compare { var: Var, op: Op, value: f64 },
    AnyCui(Vec<String>),
    Flag(Option<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Always,
    All(Vec<Clause>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    pub outcome: String,
    pub condition: Condition,
}

/// Facts a rule condition is evaluated against.
#[derive(Debug, Clone, Default)]
pub struct RuleContext {
    pub age: f64,
    /// Vitals with outliers already removed.
    pub vitals: VitalSigns,
    pub pain: Option<f64>,
    pub gcs: Option<f64>,
    pub cuis: BTreeSet<String>,
    pub flags: BTreeSet<String>,
    pub danger: Option<usize>,
    pub resources: Option<usize>,
}

impl RuleContext {
    fn value(&self, var: Var) -> Option<f64> {
        match var {
            Var::Age => Some(self.age),
            Var::Vital(v) => self.vitals.get(v),
            Var::Pain => self.pain,
            Var::Gcs => self.gcs,
            Var::Danger => self.danger.map(|d| d as f64),
            Var::Resources => self.resources.map(|r| r as f64),
        }
    }
}

impl Clause {
    pub fn holds(&self, ctx: &RuleContext) -> bool {
        match self {
            Clause::Compare { var, op, value } => ctx.value(*var).is_some_and(|v| op.apply(v, *value)),
            Clause::AnyCui(cuis) => cuis.iter().any(|c| ctx.cuis.contains(c)),
            Clause::Flag(None) => !ctx.flags.is_empty(),
            Clause::Flag(Some(id)) => ctx.flags.contains(id),
        }
    }
}

impl Condition {
    pub fn holds(&self, ctx: &RuleContext) -> bool {
        match self {
            Condition::Always => true,
            Condition::All(clauses) => clauses.iter().all(|c| c.holds(ctx)),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if text == "always" {
            return Ok(Condition::Always);
        }
        text.split('&').map(|c| parse_clause(c.trim())).collect::<Result<Vec<_>, _>>().map(Condition::All)
    }
}

fn parse_clause(text: &str) -> Result<Clause, String> {
    if let Some(list) = text.strip_prefix("cui=") {
        let cuis: Vec<String> = list.split('|').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
        if cuis.is_empty() {
            return Err("empty cui list".into());
        }
        return Ok(Clause::AnyCui(cuis));
    }
    if let Some(id) = text.strip_prefix("flag=") {
        let id = id.trim();
        return Ok(Clause::Flag((id != "any").then(|| id.to_string())));
    }
    let op_at = text.find(['<', '>', '=', '!']).ok_or_else(|| format!("no operator in clause {text:?}"))?;
    let (name, rest) = text.split_at(op_at);
    let (op, number) = [("<=", Op::Le), (">=", Op::Ge), ("==", Op::Eq), ("!=", Op::Ne), ("<", Op::Lt), (">", Op::Gt)]
        .into_iter()
        .find_map(|(sym, op)| rest.strip_prefix(sym).map(|n| (op, n)))
        .ok_or_else(|| format!("bad operator in clause {text:?}"))?;
    let var = match name.trim() {
        "age" => Var::Age,
        "pain" => Var::Pain,
        "gcs" => Var::Gcs,
        "danger" => Var::Danger,
        "resources" => Var::Resources,
        other => Var::Vital(Vital::from_short_name(other).ok_or_else(|| format!("unknown variable {other:?}"))?),
    };
    let value: f64 = number.trim().parse().map_err(|_| format!("bad number in clause {text:?}"))?;
    Ok(Clause::Compare { var, op, value })
}

/// Ordered rule list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleTable {
    pub rules: Vec<Rule>,
}

impl RuleTable {
    pub fn bundled_high_risk() -> Self {
        Self::from_tsv(BUNDLED_HIGH_RISK.as_bytes(), "high-risk rules").expect("bundled high-risk rules are valid")
    }

    pub fn from_tsv<R: BufRead>(reader: R, table: &'static str) -> Result<Self, RuleError> {
        let mut rules = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("rule_id\t")) {
                continue;
            }
            let bad = |message: String| RuleError::Parse { table, line: idx + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", cols.len())));
            }
            let condition = Condition::parse(cols[2]).map_err(bad)?;
            rules.push(Rule { id: cols[0].trim().to_string(), outcome: cols[1].trim().to_string(), condition });
        }
        Ok(Self { rules })
    }

    /// Outcomes of every satisfied rule, deduplicated, in table order.
    pub fn all_outcomes(&self, ctx: &RuleContext) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for rule in &self.rules {
            if rule.condition.holds(ctx) && !out.contains(&rule.outcome.as_str()) {
                out.push(&rule.outcome);
            }
        }
        out
    }

    /// First satisfied rule.
    pub fn first_match(&self, ctx: &RuleContext) -> Option<&Rule> {
        self.rules.iter().find(|r| r.condition.holds(ctx))
    }

    /// Distinct outcomes in table order.
    pub fn outcomes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rules {
            if !out.contains(&r.outcome.as_str()) {
                out.push(&r.outcome);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DangerBand {
    /// Inclusive lower age bound, exclusive upper bound, in years.
    pub age_min: f64,
    pub age_max: f64,
    pub vital: Vital,
    /// A present value below `low` or above `high` is in the danger zone.
    pub low: f64,
    pub high: f64,
}

/// Age-banded vital thresholds. TSV columns `age_min, age_max, vital, low, high`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DangerZones {
    pub bands: Vec<DangerBand>,
}

impl DangerZones {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_DANGER_ZONES.as_bytes()).expect("bundled danger zones are valid")
    }

    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, RuleError> {
        let mut bands = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("age_min\t")) {
                continue;
            }
            let bad = |message: String| RuleError::Parse { table: "danger zones", line: idx + 1, message };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(bad(format!("expected 5 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
            let vital = Vital::from_short_name(cols[2]).ok_or_else(|| bad(format!("unknown vital {:?}", cols[2])))?;
            bands.push(DangerBand {
                age_min: num(cols[0])?,
                age_max: num(cols[1])?,
                vital,
                low: num(cols[3])?,
                high: num(cols[4])?,
            });
        }
        Ok(Self { bands })
    }

    /// First band covering this age and vital.
    pub fn band(&self, age: f64, vital: Vital) -> Option<&DangerBand> {
        self.bands.iter().find(|b| b.vital == vital && age >= b.age_min && age < b.age_max)
    }

    /// Vitals that are present and outside the normal band for this age.
    pub fn vitals_in_danger(&self, age: f64, vitals: &VitalSigns) -> Vec<Vital> {
        let mut out = Vec::new();
        for vital in Vital::ALL {
            let Some(value) = vitals.get(vital) else { continue };
            if self.band(age, vital).is_some_and(|b| value < b.low || value > b.high) {
                out.push(vital);
            }
        }
        out
    }

    pub fn count(&self, age: f64, vitals: &VitalSigns) -> usize {
        self.vitals_in_danger(age, vitals).len()
    }
}
