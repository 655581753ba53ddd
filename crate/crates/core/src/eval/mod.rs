//! Rater evaluation against a reference label set.

pub mod auc;
pub mod bootstrap;
pub mod confusion;
pub mod render;
pub mod report;

use thiserror::Error;

pub use auc::{binary_auc, micro_auc, one_hot, SortedScores};
pub use bootstrap::{bootstrap_ci, bootstrap_cis, BootstrapConfig, Estimate};
pub use confusion::{macro_metrics, triage_rates, ConfusionMatrix, MacroMetrics, RateCounts, TriageRates};
pub use report::{
    disposition_table, evaluate_rater, mean_accuracy, subgroup_report, DispositionTable, EvalReport, Evaluation, Grouper, Rater,
    RaterOutput, RecordContext, SubgroupReport,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label length mismatch: {truth} reference labels, {assigned} assigned")]
    Length { truth: usize, assigned: usize },
    #[error("no records to evaluate")]
    Empty,
    #[error("record {0}: class probabilities must lie in [0, 1] and sum to 1")]
    Probabilities(usize),
}
