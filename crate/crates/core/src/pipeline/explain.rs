use std::fmt::Write;

use super::{RecommendationResult, ReasoningStep, SearchScope};
use crate::reason::{Flag, Layer};

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn flag_list(flags: &[Flag]) -> String {
    if flags.is_empty() {
        "none".to_string()
    } else {
        flags.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(", ")
    }
}

fn write_step(out: &mut String, step: &ReasoningStep) {
    let heading = match (&step.layer, &step.department) {
        (Layer::Department, Some(d)) => format!("[DEPARTMENT {d}]"),
        (layer, _) => format!("[{layer}]"),
    };
    let _ = writeln!(out, "{heading}");
    for s in &step.searches {
        let scope = match s.scope {
            SearchScope::UnfilteredMerged => "merged corpus".to_string(),
            SearchScope::TierFiltered => {
                let tier = s.filter.tier.map(|t| t.as_str()).unwrap_or("any");
                match &s.filter.department {
                    Some(d) => format!("{tier} tier, {d}"),
                    None => format!("{tier} tier"),
                }
            }
        };
        let _ = writeln!(out, "  search ({scope}, k={}): {} hit(s)", s.k, s.hits.len());
    }
    let _ = writeln!(out, "  documents in prompt: {}", step.context.len());
    let _ = writeln!(out, "  summary: {}", step.summary);
    let _ = writeln!(out, "  flags: {}", flag_list(&step.flags));
    for d in &step.departments {
        let _ = writeln!(
            out,
            "  selected department: {} (confidence {:.3}, weight {})",
            d.department, d.confidence, d.weight
        );
    }
    if !step.eliminated.is_empty() {
        let _ = writeln!(out, "  already covered earlier: {}", step.eliminated.join(", "));
    }
}

/// Human-readable report of a run: per-layer decisions, flags, and each
/// recommendation with its rationale and evidence.
pub fn explain(result: &RecommendationResult) -> String {
    let mut out = String::new();
    let a = &result.config_used.ablation;
    let p = &result.config_used.params;
    let _ = writeln!(out, "Recommendation report");
    let _ = writeln!(
        out,
        "configuration: memory={} department_layer={} dual_kb={}; root_top_k={} dept_top_k={} max_departments={} max_recommendations={} min_weight={:.2}",
        on_off(a.memory_enabled),
        on_off(a.department_layer_enabled),
        on_off(a.dual_kb_enabled),
        p.root_top_k,
        p.dept_top_k,
        p.max_departments,
        p.max_recommendations,
        p.min_weight
    );
    let _ = writeln!(out);
    for step in &result.trace {
        write_step(&mut out, step);
    }
    let _ = writeln!(out);
    if result.recommendations.is_empty() {
        let _ = writeln!(out, "No recommendations.");
    } else {
        let _ = writeln!(out, "Recommendations:");
        for (i, r) in result.recommendations.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:>3}. {} ({}) weight {} {} [{}]",
                i + 1,
                r.test_id,
                r.name,
                r.weight,
                r.urgency,
                r.department
            );
            let _ = writeln!(out, "     rationale: {}", r.rationale);
            let ids: Vec<&str> = r.supporting_doc_ids.iter().map(|d| d.as_str()).collect();
            let _ = writeln!(out, "     evidence: {}", ids.join(", "));
        }
    }
    let _ = writeln!(out, "Flags: {}", flag_list(&result.flags()));
    out
}
