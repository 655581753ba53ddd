//! Plain-text tables for evaluation results.

use std::fmt::Write;

use super::bootstrap::Estimate;
use super::confusion::ConfusionMatrix;
use super::report::{DispositionTable, EvalReport, Evaluation, SubgroupReport};

/// Left-aligned first column, right-aligned remaining columns.
pub fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let n = header.len();
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        for (i, cell) in cells.iter().enumerate().take(n) {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[i]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = widths[i]);
            }
        }
        out.push('\n');
    };
    line(&mut out, header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &rule);
    for row in rows {
        line(&mut out, row);
    }
    out
}

pub fn estimate(e: &Estimate) -> String {
    match (e.lo, e.hi) {
        (Some(lo), Some(hi)) => format!("{:.3} [{lo:.3}, {hi:.3}]", e.value),
        _ => format!("{:.3}", e.value),
    }
}

fn optional(e: Option<&Estimate>) -> String {
    e.map_or_else(|| "-".to_string(), estimate)
}

fn strings<const N: usize>(cells: [&str; N]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

pub fn summary_table(reports: &[EvalReport]) -> String {
    let header = strings(["rater", "n", "accuracy", "under-triage", "over-triage", "macro F1", "micro AUC"]);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.rater.clone(),
                r.n_records.to_string(),
                estimate(&r.accuracy),
                estimate(&r.under_triage),
                estimate(&r.over_triage),
                estimate(&r.macro_f1),
                optional(r.micro_auc.as_ref()),
            ]
        })
        .collect();
    table(&header, &rows)
}

pub fn per_class_table(report: &EvalReport) -> String {
    let header = strings(["true ESI", "n", "accuracy", "under-triage", "over-triage"]);
    let rows: Vec<Vec<String>> = report
        .per_class
        .iter()
        .map(|c| {
            vec![
                c.esi.to_string(),
                c.counts.n.to_string(),
                optional(c.accuracy.as_ref()),
                optional(c.under_triage.as_ref()),
                optional(c.over_triage.as_ref()),
            ]
        })
        .collect();
    table(&header, &rows)
}

pub fn confusion_table(m: &ConfusionMatrix) -> String {
    let mut header = vec!["true \\ assigned".to_string()];
    header.extend((1..=5).map(|e| format!("ESI {e}")));
    header.push("total".into());
    let rows: Vec<Vec<String>> = (0..5)
        .map(|t| {
            let mut row = vec![format!("ESI {}", t + 1)];
            row.extend(m.counts[t].iter().map(u64::to_string));
            row.push(m.row_total(t).to_string());
            row
        })
        .collect();
    table(&header, &rows)
}

pub fn subgroup_table(subgroups: &[SubgroupReport]) -> String {
    let header = strings(["group", "rater", "n", "accuracy", "under-triage", "over-triage"]);
    let mut rows = Vec::new();
    for s in subgroups {
        let name = format!("{}={}", s.grouper.as_str(), s.group);
        if s.suppressed {
            rows.push(vec![name, "(suppressed)".into(), s.n_records.to_string(), "-".into(), "-".into(), "-".into()]);
            continue;
        }
        for r in &s.reports {
            rows.push(vec![
                name.clone(),
                r.rater.clone(),
                r.n_records.to_string(),
                estimate(&r.accuracy),
                estimate(&r.under_triage),
                estimate(&r.over_triage),
            ]);
        }
    }
    table(&header, &rows)
}

pub fn disposition_text(t: &DispositionTable) -> String {
    let mut header = vec![format!("{} disposition", t.rater)];
    header.extend((1..=5).map(|e| format!("ESI {e}")));
    header.push("total".into());
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.disposition.clone()];
            row.extend(r.counts.iter().map(|&c| format!("{c} ({:.1}%)", 100.0 * c as f64 / r.total.max(1) as f64)));
            row.push(r.total.to_string());
            row
        })
        .collect();
    table(&header, &rows)
}

pub fn evaluation_text(eval: &Evaluation) -> String {
    let mut out = format!(
        "reference labels: {} ({} records, {} bootstrap resamples, {:.0}% intervals)\n\n",
        eval.truth,
        eval.n_records,
        eval.bootstrap.n_resamples,
        eval.bootstrap.level * 100.0
    );
    out.push_str(&summary_table(&eval.raters));
    if let Some(m) = eval.external_mean_accuracy {
        let _ = writeln!(out, "\nmean external rater accuracy: {m:.3}");
    }
    for r in &eval.raters {
        let _ = writeln!(out, "\n{}: per class", r.rater);
        out.push_str(&per_class_table(r));
        let _ = writeln!(out, "\n{}: confusion", r.rater);
        out.push_str(&confusion_table(&r.confusion));
    }
    if !eval.subgroups.is_empty() {
        out.push_str("\nsubgroups\n");
        out.push_str(&subgroup_table(&eval.subgroups));
    }
    for t in &eval.disposition {
        out.push('\n');
        out.push_str(&disposition_text(t));
    }
    out
}
