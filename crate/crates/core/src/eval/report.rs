use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{AblationReport, AblationVariant, EvalReport};

/// One method row; rates are percentages, CRS is on the 1-5 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub label: String,
    pub coverage_rate: f64,
    pub accuracy: f64,
    pub miss_rate: f64,
    pub crs: Option<f64>,
}

impl MethodRow {
    pub fn from_report(label: impl Into<String>, r: &EvalReport) -> Self {
        Self {
            label: label.into(),
            coverage_rate: r.coverage_rate * 100.0,
            accuracy: r.accuracy * 100.0,
            miss_rate: r.miss_rate * 100.0,
            crs: r.crs_mean,
        }
    }
}

/// Plain-text table: first column left-aligned, the rest right-aligned.
fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = String::new();
    let header: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    let _ = writeln!(out, "{}", line(&header));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    let _ = writeln!(out, "{}", rule.join("-+-"));
    for row in rows {
        let _ = writeln!(out, "{}", line(row));
    }
    out
}

pub fn render_method_table(rows: &[MethodRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                format!("{:.1}", r.coverage_rate),
                format!("{:.1}", r.accuracy),
                format!("{:.1}", r.miss_rate),
                r.crs.map_or_else(|| "-".to_string(), |c| format!("{c:.1}")),
            ]
        })
        .collect();
    table(&["Method", "Coverage Rate", "Accuracy", "Miss Rate", "CRS"], &body)
}

pub fn render_department_table(report: &EvalReport) -> String {
    let body: Vec<Vec<String>> = report
        .per_department
        .iter()
        .map(|(d, t)| {
            vec![
                d.clone(),
                t.cases.to_string(),
                format!("{:.1}", t.coverage_rate * 100.0),
                format!("{:.1}", t.accuracy * 100.0),
                format!("{:.1}", t.miss_rate * 100.0),
            ]
        })
        .collect();
    table(&["Department", "Cases", "Coverage Rate", "Accuracy", "Miss Rate"], &body)
}

/// Deltas in percentage points; the full-system row prints plain zeros.
pub fn render_ablation_table(report: &AblationReport) -> String {
    let body: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let cell = |v: f64| {
                if r.variant == AblationVariant::Full {
                    "0.0".to_string()
                } else {
                    format!("{v:+.1}")
                }
            };
            vec![
                r.variant.label().to_string(),
                cell(r.deltas.coverage_rate),
                cell(r.deltas.accuracy),
                cell(r.deltas.miss_rate),
            ]
        })
        .collect();
    let mut out = String::from("Performance change vs full system (percentage points)\n");
    out.push_str(&table(&["System Variant", "Coverage Rate", "Accuracy", "Miss Rate"], &body));
    out
}

/// Summary of one evaluation run.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = format!(
        "cases: {} ({} failed)\n",
        report.cases_total, report.cases_failed
    );
    out.push_str(&render_method_table(&[MethodRow::from_report("This run", report)]));
    if !report.per_department.is_empty() {
        out.push('\n');
        out.push_str(&render_department_table(report));
    }
    out
}
