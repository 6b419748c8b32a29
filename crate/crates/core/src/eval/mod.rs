//! Ground-truth evaluation and ablation.
//!
//! For recommended set R, relevant set G and critical set C ⊆ G:
//! coverage rate = |R ∩ G| / |G|, accuracy = |R ∩ G| / |R| and miss rate =
//! |C \ R| / |C|. Accuracy is 1.0 when R is empty (flagged as vacuous) and
//! the miss rate is 0.0 when C is empty. Reports macro-average over cases.

mod cases;
mod report;

pub use cases::{
    cases_to_jsonl, generate_eval_cases, load_cases, parse_cases, CaseError, CaseFileError,
    EvalCase, MAX_CRS, MIN_CRS,
};
pub use report::{
    render_ablation_table, render_department_table, render_method_table, render_report, MethodRow,
};

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Engine, PipelineError, RecommendationResult};
use crate::types::{AblationConfig, PipelineParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics<F> {
    pub coverage_rate: F,
    pub accuracy: F,
    pub miss_rate: F,
    /// Accuracy was defined by convention because R was empty.
    pub vacuous_accuracy: bool,
}

fn ratio<F: Float>(num: usize, den: usize) -> F {
    F::from(num).expect("count fits") / F::from(den).expect("count fits")
}

/// Metrics over raw sets. `relevant` must be non-empty.
pub fn set_metrics<F: Float>(
    recommended: &BTreeSet<&str>,
    relevant: &BTreeSet<&str>,
    critical: &BTreeSet<&str>,
) -> SetMetrics<F> {
    assert!(!relevant.is_empty(), "relevant set must be non-empty");
    let hits = recommended.intersection(relevant).count();
    let vacuous_accuracy = recommended.is_empty();
    let accuracy = if vacuous_accuracy {
        F::one()
    } else {
        ratio(hits, recommended.len())
    };
    let miss_rate = if critical.is_empty() {
        F::zero()
    } else {
        ratio(critical.difference(recommended).count(), critical.len())
    };
    SetMetrics {
        coverage_rate: ratio(hits, relevant.len()),
        accuracy,
        miss_rate,
        vacuous_accuracy,
    }
}

fn as_refs(s: &BTreeSet<String>) -> BTreeSet<&str> {
    s.iter().map(String::as_str).collect()
}

pub fn metrics<F: Float>(recommended: &BTreeSet<String>, case: &EvalCase) -> SetMetrics<F> {
    set_metrics(
        &as_refs(recommended),
        &as_refs(&case.relevant_tests),
        &as_refs(&case.critical_tests),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CaseStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub id: String,
    pub status: CaseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<SetMetrics<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_department: Option<String>,
    pub recommended: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub cases: usize,
    pub coverage_rate: f64,
    pub accuracy: f64,
    pub miss_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: AblationConfig,
    pub cases_total: usize,
    pub cases_failed: usize,
    /// Means over successful cases; 0.0 when every case failed.
    pub coverage_rate: f64,
    pub accuracy: f64,
    pub miss_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crs_mean: Option<f64>,
    pub per_case: Vec<CaseRow>,
    /// Keyed by the department of each case's top recommendation.
    pub per_department: BTreeMap<String, RateTriple>,
}

impl EvalReport {
    pub fn cases_ok(&self) -> usize {
        self.cases_total - self.cases_failed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no evaluation cases")]
    NoCases,
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::NoCases => "EMPTY_CASES",
        }
    }
}

/// Report plus the per-case pipeline outputs it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub results: Vec<Result<RecommendationResult, String>>,
}

fn mean(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let (n, sum) = values.fold((0usize, 0.0f64), |(n, s), v| (n + 1, s + v));
    (n, if n == 0 { 0.0 } else { sum / n as f64 })
}

fn triple<'a>(rows: impl Iterator<Item = &'a SetMetrics<f64>> + Clone) -> RateTriple {
    let (cases, coverage_rate) = mean(rows.clone().map(|m| m.coverage_rate));
    RateTriple {
        cases,
        coverage_rate,
        accuracy: mean(rows.clone().map(|m| m.accuracy)).1,
        miss_rate: mean(rows.map(|m| m.miss_rate)).1,
    }
}

fn row_for(case: &EvalCase, outcome: &Result<RecommendationResult, PipelineError>) -> CaseRow {
    match outcome {
        Ok(result) => {
            let recommended: Vec<String> = result.recommendations.iter().map(|r| r.test_id.clone()).collect();
            let set: BTreeSet<String> = recommended.iter().cloned().collect();
            CaseRow {
                id: case.id.clone(),
                status: CaseStatus::Ok,
                metrics: Some(metrics(&set, case)),
                top_department: result.recommendations.first().map(|r| r.department.clone()),
                recommended,
                error: None,
            }
        }
        Err(e) => CaseRow {
            id: case.id.clone(),
            status: CaseStatus::Failed,
            metrics: None,
            top_department: None,
            recommended: Vec::new(),
            error: Some(format!("{}: {e}", e.code())),
        },
    }
}

pub fn evaluate_detailed(
    cases: &[EvalCase],
    engine: &Engine,
    config: &AblationConfig,
    params: &PipelineParams,
) -> Result<Evaluation, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::NoCases);
    }
    let outcomes: Vec<Result<RecommendationResult, PipelineError>> = cases
        .par_iter()
        .map(|c| engine.recommend(&c.query, config, params))
        .collect();
    let per_case: Vec<CaseRow> = cases.iter().zip(&outcomes).map(|(c, o)| row_for(c, o)).collect();
    let ok: Vec<&SetMetrics<f64>> = per_case.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let overall = triple(ok.iter().copied());

    let mut by_dept: BTreeMap<String, Vec<&SetMetrics<f64>>> = BTreeMap::new();
    for row in &per_case {
        if let (Some(d), Some(m)) = (&row.top_department, &row.metrics) {
            by_dept.entry(d.clone()).or_default().push(m);
        }
    }
    let per_department = by_dept
        .into_iter()
        .map(|(d, rows)| (d, triple(rows.into_iter())))
        .collect();

    let annotations: Vec<f64> = cases
        .iter()
        .filter_map(|c| c.crs_annotations.as_ref())
        .flatten()
        .map(|&v| f64::from(v))
        .collect();
    let crs_mean = (!annotations.is_empty()).then(|| mean(annotations.into_iter()).1);

    let report = EvalReport {
        config: *config,
        cases_total: cases.len(),
        cases_failed: per_case.iter().filter(|r| r.status == CaseStatus::Failed).count(),
        coverage_rate: overall.coverage_rate,
        accuracy: overall.accuracy,
        miss_rate: overall.miss_rate,
        crs_mean,
        per_case,
        per_department,
    };
    let results = outcomes
        .into_iter()
        .map(|o| o.map_err(|e| format!("{}: {e}", e.code())))
        .collect();
    Ok(Evaluation { report, results })
}

pub fn evaluate(
    cases: &[EvalCase],
    engine: &Engine,
    config: &AblationConfig,
    params: &PipelineParams,
) -> Result<EvalReport, EvalError> {
    evaluate_detailed(cases, engine, config, params).map(|e| e.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    WithoutMemory,
    WithoutDepartmentLayer,
    SingleKnowledgeBase,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Full,
        AblationVariant::WithoutMemory,
        AblationVariant::WithoutDepartmentLayer,
        AblationVariant::SingleKnowledgeBase,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Full => "Full system",
            AblationVariant::WithoutMemory => "w/o Memory",
            AblationVariant::WithoutDepartmentLayer => "w/o Department Layer",
            AblationVariant::SingleKnowledgeBase => "Single Knowledge Base",
        }
    }

    pub fn config(self) -> AblationConfig {
        match self {
            AblationVariant::Full => AblationConfig::full(),
            AblationVariant::WithoutMemory => AblationConfig::without_memory(),
            AblationVariant::WithoutDepartmentLayer => AblationConfig::without_department_layer(),
            AblationVariant::SingleKnowledgeBase => AblationConfig::single_kb(),
        }
    }
}

/// Percentage-point differences of a variant against the full system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub coverage_rate: f64,
    pub accuracy: f64,
    pub miss_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub deltas: Deltas,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

fn pp(variant: f64, full: f64) -> f64 {
    (variant - full) * 100.0
}

/// Evaluates the four variants and their deltas against the full system.
pub fn ablation_suite(
    cases: &[EvalCase],
    engine: &Engine,
    params: &PipelineParams,
) -> Result<AblationReport, EvalError> {
    let reports = AblationVariant::ALL
        .iter()
        .map(|v| evaluate(cases, engine, &v.config(), params))
        .collect::<Result<Vec<_>, _>>()?;
    let full = reports[0].clone();
    let rows = AblationVariant::ALL
        .into_iter()
        .zip(reports)
        .map(|(variant, report)| AblationRow {
            variant,
            deltas: Deltas {
                coverage_rate: pp(report.coverage_rate, full.coverage_rate),
                accuracy: pp(report.accuracy, full.accuracy),
                miss_rate: pp(report.miss_rate, full.miss_rate),
            },
            report,
        })
        .collect();
    Ok(AblationReport { rows })
}
