//! Emergency department triage acuity pipeline.
//!
//! The crate covers the whole path from raw triage records to evaluated
//! acuity predictions:
//!
//! * [`ingest`] parses JSON Lines encounter files and applies record filters.
//! * [`cnlp`] extracts dictionary concepts from free text (sentence split,
//!   tokenize, normalize, tag, chunk, permutation lookup, negation).
//! * [`features`] turns encounters and concepts into sparse feature vectors.
//! * [`gbdt`] trains and applies a multiclass gradient-boosted tree ensemble.
//! * [`labeling`] implements disagreement-driven label review and gold-set rules.
//! * [`eval`] computes triage accuracy, under/over-triage, AUC and macro metrics
//!   with bootstrap confidence intervals.
//! * [`synth`] generates synthetic encounters labeled by a transparent rule oracle.
//! * [`app`] wires everything into the `triage` command line tool.

pub mod app;
pub mod cnlp;
pub mod esi;
pub mod eval;
pub mod features;
pub mod gbdt;
pub mod ingest;
pub mod labeling;
pub mod provenance;
pub mod rules;
pub mod synth;

pub use esi::Esi;
