//! Prompt rendering from the versioned templates under `templates/`.
//!
//! Placeholders are `{{patient}}`, `{{documents}}`, `{{memory}}`,
//! `{{department}}` and `{{schema}}`.

use std::fmt::Write;

use super::{Layer, ReasoningContext};
use crate::text::truncate_chars;
use crate::types::PatientQuery;

pub const PROMPT_TEMPLATE_VERSION: &str = "v1";

/// Per-document body budget in characters.
pub const BODY_CHAR_LIMIT: usize = 800;

/// Every serialised memory record starts with this prefix.
pub const MEMORY_LINE_PREFIX: &str = "- [memory step ";

/// Rendered in place of memory when the context carries none.
pub const NO_MEMORY_TEXT: &str = "(no prior reasoning)";

const SYSTEM: &str = include_str!("../../templates/system.v1.txt");
const ROOT: &str = include_str!("../../templates/root.v1.txt");
const DEPARTMENT: &str = include_str!("../../templates/department.v1.txt");
const ITEM: &str = include_str!("../../templates/item.v1.txt");
const REPAIR: &str = include_str!("../../templates/repair.v1.txt");
const SCHEMA_DEPARTMENTS: &str = include_str!("../../templates/schema_departments.v1.json");
const SCHEMA_TESTS: &str = include_str!("../../templates/schema_tests.v1.json");

pub fn system_prompt() -> &'static str {
    SYSTEM
}

fn schema(layer: Layer) -> &'static str {
    match layer {
        Layer::Root => SCHEMA_DEPARTMENTS.trim_end(),
        Layer::Department | Layer::Item => SCHEMA_TESTS.trim_end(),
    }
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

fn render_patient(q: &PatientQuery) -> String {
    let mut s = format!("Symptoms: {}\n", q.symptoms.trim());
    if let Some(age) = q.age {
        let _ = writeln!(s, "Age: {age}");
    }
    if let Some(sex) = q.sex {
        let _ = writeln!(s, "Sex: {sex:?}");
    }
    if !q.vitals.is_empty() {
        let v: Vec<String> = q.vitals.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(s, "Vitals: {}", v.join(", "));
    }
    if !q.history.is_empty() {
        let _ = writeln!(s, "History: {}", q.history.join("; "));
    }
    s.trim_end().to_string()
}

fn render_documents(ctx: &ReasoningContext) -> String {
    if ctx.hits.is_empty() {
        return "(no documents retrieved)".to_string();
    }
    let mut s = String::new();
    for (i, h) in ctx.hits.iter().enumerate() {
        let d = &h.document;
        let _ = writeln!(
            s,
            "[{}] id={} department={} similarity={:.4}",
            i + 1,
            d.id(),
            d.department(),
            h.hit.similarity
        );
        if let Some(test_id) = d.test_id() {
            let _ = writeln!(s, "test_id: {test_id}");
        }
        let _ = writeln!(s, "Title: {}", d.title());
        let _ = writeln!(s, "{}", truncate_chars(d.body(), BODY_CHAR_LIMIT));
        s.push('\n');
    }
    s.trim_end().to_string()
}

fn render_memory(ctx: &ReasoningContext) -> String {
    if ctx.memory.is_empty() {
        return NO_MEMORY_TEXT.to_string();
    }
    let lines: Vec<String> = ctx
        .memory
        .iter()
        .map(|m| {
            let flags: Vec<&str> = m.flags.iter().map(|f| f.as_str()).collect();
            format!(
                "{MEMORY_LINE_PREFIX}{}] {}: {} | flags: {}",
                m.step,
                m.layer,
                m.summary,
                if flags.is_empty() { "none".to_string() } else { flags.join(", ") }
            )
        })
        .collect();
    lines.join("\n")
}

/// Deterministic prompt for `ctx`.
pub fn render_prompt(ctx: &ReasoningContext) -> String {
    let template = match ctx.layer {
        Layer::Root => ROOT,
        Layer::Department => DEPARTMENT,
        Layer::Item => ITEM,
    };
    let department = ctx.department.as_deref().unwrap_or("all departments");
    fill(
        template,
        &[
            ("patient", &render_patient(&ctx.query)),
            ("documents", &render_documents(ctx)),
            ("memory", &render_memory(ctx)),
            ("department", department),
            ("schema", schema(ctx.layer)),
        ],
    )
}

pub fn render_repair_prompt(layer: Layer) -> String {
    fill(REPAIR, &[("schema", schema(layer))])
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::pipeline::MemoryRecord;
    use crate::reason::{ContextHit, Flag};
    use crate::types::{Document, DocumentId, Tier};
    use crate::vecstore::RetrievalHit;

    fn hit(id: &str, title: &str, body: &str) -> ContextHit {
        ContextHit {
            hit: RetrievalHit {
                doc_id: DocumentId::new(id).unwrap(),
                similarity: 0.5,
            },
            document: Document::new(
                DocumentId::new(id).unwrap(),
                Tier::Department,
                "cardiology",
                title,
                body,
                BTreeMap::new(),
            )
            .unwrap(),
        }
    }

    fn ctx() -> ReasoningContext {
        let mut c = ReasoningContext::new(
            Layer::Root,
            PatientQuery::new("crushing chest pain").with_age(61),
        );
        c.hits = vec![hit("a", "Cardiology guide", "heart"), hit("b", "Chest pain pathway", "acs")];
        c
    }

    #[test]
    fn contains_query_titles_and_schema() {
        let p = render_prompt(&ctx());
        assert!(p.contains("crushing chest pain"));
        assert!(p.contains("Cardiology guide"));
        assert!(p.contains("Chest pain pathway"));
        assert!(p.contains("\"departments\""));
        assert!(p.contains(NO_MEMORY_TEXT));
        assert!(!p.contains("{{"));
    }

    #[test]
    fn deterministic() {
        assert_eq!(render_prompt(&ctx()), render_prompt(&ctx()));
    }

    #[test]
    fn includes_memory_summary() {
        let mut c = ctx();
        c.memory.push(MemoryRecord {
            step: 0,
            layer: Layer::Root,
            department: None,
            summary: "routed to cardiology".into(),
            flags: vec![Flag::UrgentCase],
            doc_ids: vec![],
        });
        let p = render_prompt(&c);
        assert!(p.contains("routed to cardiology"));
        assert!(p.contains(MEMORY_LINE_PREFIX));
        assert!(!p.contains(NO_MEMORY_TEXT));
    }

    #[test]
    fn bodies_are_truncated() {
        let mut c = ctx();
        let long = "x".repeat(BODY_CHAR_LIMIT + 50);
        c.hits = vec![hit("a", "t", &long)];
        let p = render_prompt(&c);
        assert!(p.contains(&"x".repeat(BODY_CHAR_LIMIT)));
        assert!(!p.contains(&"x".repeat(BODY_CHAR_LIMIT + 1)));
    }

    #[test]
    fn department_prompt_names_department() {
        let mut c = ctx();
        c.layer = Layer::Department;
        c.department = Some("endocrinology".into());
        let p = render_prompt(&c);
        assert!(p.contains("test selection for endocrinology"));
        assert!(p.contains("\"tests\""));
    }
}
