use std::collections::{BTreeMap, BTreeSet};

use super::{
    normalize_flags, DepartmentCandidate, Flag, Layer, ReasonError, Reasoner, ReasoningContext,
    ReasoningOutput, TestCandidate,
};
use crate::text::token_set;
use crate::types::UrgencyLevel;

/// Minimum retrieval similarity for an item hit to become a test candidate.
pub const DEFAULT_TEST_SIMILARITY_THRESHOLD: f64 = 0.05;

/// Symptom words that raise `urgent_case`.
pub const URGENT_SYMPTOM_TERMS: [&str; 3] = ["severe", "acute", "sudden"];

/// Root layer: a top department below this confidence is `uncertain_diagnosis`.
const ROOT_UNCERTAIN_BELOW: f64 = 0.5;
/// Root layer: two or more departments at or above this are `needs_followup`.
const ROOT_FOLLOWUP_AT: f64 = 0.25;

/// Deterministic rule-based reasoner.
///
/// Root: hits are grouped by department; a department's confidence is its
/// similarity mass (floored at 0) over the total mass; its urgency is the
/// highest urgency declared by its hit documents.
///
/// Department and item: every hit whose document carries a `test_id` and
/// whose similarity reaches the threshold becomes a candidate, in hit
/// order, with confidence = similarity clamped to `[0, 1]`. Flags already
/// in memory are carried forward.
#[derive(Debug, Clone)]
pub struct MockReasoner {
    threshold: f64,
}

impl Default for MockReasoner {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_TEST_SIMILARITY_THRESHOLD,
        }
    }
}

impl MockReasoner {
    pub fn with_threshold(threshold: f64) -> Self {
        Self { threshold }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn root(&self, ctx: &ReasoningContext) -> ReasoningOutput {
        let mut mass: BTreeMap<&str, (f64, usize, UrgencyLevel)> = BTreeMap::new();
        for h in &ctx.hits {
            let e = mass
                .entry(h.document.department())
                .or_insert((0.0, 0, UrgencyLevel::Routine));
            e.0 += h.hit.similarity;
            e.1 += 1;
            e.2 = e.2.max(h.document.urgency());
        }
        let total: f64 = mass.values().map(|m| m.0.max(0.0)).sum();
        let mut departments: Vec<DepartmentCandidate> = if total > 0.0 {
            mass.iter()
                .filter(|(_, m)| m.0 > 0.0)
                .map(|(dep, &(m, n, urgency))| DepartmentCandidate {
                    department: dep.to_string(),
                    confidence: m / total,
                    rationale: format!(
                        "{n} retrieved {dep} document(s) with similarity mass {m:.3}"
                    ),
                    urgency,
                })
                .collect()
        } else {
            Vec::new()
        };
        departments.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| a.department.cmp(&b.department))
        });

        let mut flags = symptom_flags(ctx);
        match departments.first() {
            None => flags.push(Flag::UncertainDiagnosis),
            Some(top) => {
                if top.confidence < ROOT_UNCERTAIN_BELOW {
                    flags.push(Flag::UncertainDiagnosis);
                }
                if top.urgency == UrgencyLevel::Urgent {
                    flags.push(Flag::UrgentCase);
                }
            }
        }
        if departments
            .iter()
            .filter(|d| d.confidence >= ROOT_FOLLOWUP_AT)
            .count()
            >= 2
        {
            flags.push(Flag::NeedsFollowup);
        }
        normalize_flags(&mut flags);

        let summary = if departments.is_empty() {
            "root: no department evidence".to_string()
        } else {
            let parts: Vec<String> = departments
                .iter()
                .map(|d| format!("{} ({:.3})", d.department, d.confidence))
                .collect();
            format!("root: routed to {}", parts.join(", "))
        };
        ReasoningOutput {
            departments,
            tests: Vec::new(),
            flags,
            summary,
        }
    }

    fn tests(&self, ctx: &ReasoningContext) -> ReasoningOutput {
        let mut seen = BTreeSet::new();
        let mut tests = Vec::new();
        for h in &ctx.hits {
            let Some(test_id) = h.document.test_id() else {
                continue;
            };
            if h.hit.similarity < self.threshold || !seen.insert(test_id) {
                continue;
            }
            let indications = h
                .document
                .metadata()
                .get("symptoms")
                .map(|s| format!(" indicated for {s};"))
                .unwrap_or_default();
            tests.push(TestCandidate {
                test_id: test_id.to_string(),
                name: h.document.title().to_string(),
                department: h.document.department().to_string(),
                confidence: h.hit.similarity.clamp(0.0, 1.0),
                urgency: h.document.urgency(),
                rationale: format!(
                    "{}:{indications} retrieval similarity {:.3}",
                    h.document.title(),
                    h.hit.similarity
                ),
                supporting_doc_ids: vec![h.document.id().clone()],
            });
        }

        let mut flags = symptom_flags(ctx);
        flags.extend(ctx.memory.iter().flat_map(|m| m.flags.iter().copied()));
        match tests.first() {
            None => flags.push(Flag::UncertainDiagnosis),
            Some(top) if top.urgency == UrgencyLevel::Urgent => flags.push(Flag::UrgentCase),
            Some(_) => {}
        }
        normalize_flags(&mut flags);

        let ids: Vec<&str> = tests.iter().map(|t| t.test_id.as_str()).collect();
        let scope = match (ctx.layer, &ctx.department) {
            (Layer::Department, Some(d)) => format!("department {d}"),
            _ => "item".to_string(),
        };
        let summary = if ids.is_empty() {
            format!("{scope}: no candidate tests")
        } else {
            format!("{scope}: {} candidate test(s): {}", ids.len(), ids.join(", "))
        };
        ReasoningOutput {
            departments: Vec::new(),
            tests,
            flags,
            summary,
        }
    }
}

fn symptom_flags(ctx: &ReasoningContext) -> Vec<Flag> {
    let tokens = token_set(&ctx.query.symptoms);
    if URGENT_SYMPTOM_TERMS.iter().any(|t| tokens.contains(*t)) {
        vec![Flag::UrgentCase]
    } else {
        Vec::new()
    }
}

impl Reasoner for MockReasoner {
    fn analyze(&self, ctx: &ReasoningContext) -> Result<ReasoningOutput, ReasonError> {
        ctx.validate()?;
        Ok(match ctx.layer {
            Layer::Root => self.root(ctx),
            Layer::Department | Layer::Item => self.tests(ctx),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::reason::ContextHit;
    use crate::types::{Document, DocumentId, PatientQuery, Tier, TEST_ID_KEY, URGENCY_KEY};
    use crate::vecstore::RetrievalHit;

    fn dept_hit(id: &str, dep: &str, sim: f64) -> ContextHit {
        ContextHit {
            hit: RetrievalHit {
                doc_id: DocumentId::new(id).unwrap(),
                similarity: sim,
            },
            document: Document::new(
                DocumentId::new(id).unwrap(),
                Tier::Department,
                dep,
                format!("{dep} guide"),
                "body",
                BTreeMap::new(),
            )
            .unwrap(),
        }
    }

    fn item_hit(id: &str, test: &str, sim: f64, urgency: &str) -> ContextHit {
        let meta = BTreeMap::from([
            (TEST_ID_KEY.to_string(), test.to_string()),
            (URGENCY_KEY.to_string(), urgency.to_string()),
        ]);
        ContextHit {
            hit: RetrievalHit {
                doc_id: DocumentId::new(id).unwrap(),
                similarity: sim,
            },
            document: Document::new(DocumentId::new(id).unwrap(), Tier::Item, "cardiology", test, "b", meta)
                .unwrap(),
        }
    }

    fn root_ctx(hits: Vec<ContextHit>) -> ReasoningContext {
        let mut ctx = ReasoningContext::new(Layer::Root, PatientQuery::new("chest pain"));
        ctx.hits = hits;
        ctx
    }

    #[test]
    fn single_department_gets_full_confidence() {
        let ctx = root_ctx(vec![dept_hit("a", "cardiology", 0.4), dept_hit("b", "cardiology", 0.2)]);
        let out = MockReasoner::default().analyze(&ctx).unwrap();
        assert_eq!(out.departments.len(), 1);
        assert_eq!(out.departments[0].department, "cardiology");
        assert_eq!(out.departments[0].confidence, 1.0);
        assert!(out.tests.is_empty());
    }

    #[test]
    fn no_hits_is_uncertain() {
        let out = MockReasoner::default().analyze(&root_ctx(vec![])).unwrap();
        assert!(out.departments.is_empty());
        assert_eq!(out.flags, [Flag::UncertainDiagnosis]);
    }

    #[test]
    fn root_confidence_is_floored_mass_share() {
        let ctx = root_ctx(vec![
            dept_hit("a", "cardiology", 0.6),
            dept_hit("b", "endocrinology", 0.2),
            dept_hit("c", "gastroenterology", -0.3),
        ]);
        let out = MockReasoner::default().analyze(&ctx).unwrap();
        let conf: Vec<(String, f64)> = out
            .departments
            .iter()
            .map(|d| (d.department.clone(), d.confidence))
            .collect();
        assert_eq!(conf.len(), 2);
        assert_eq!(conf[0].0, "cardiology");
        assert!((conf[0].1 - 0.75).abs() < 1e-12);
        assert!((conf[1].1 - 0.25).abs() < 1e-12);
        let sum: f64 = conf.iter().map(|c| c.1).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(out.flags, [Flag::NeedsFollowup]);
    }

    #[test]
    fn tests_respect_threshold_and_order() {
        let mut ctx = ReasoningContext::new(Layer::Department, PatientQuery::new("chest pain"));
        ctx.department = Some("cardiology".into());
        ctx.hits = vec![
            item_hit("i1", "troponin", 0.5, "urgent"),
            item_hit("i2", "ecg", 0.05, "routine"),
            item_hit("i3", "bnp", 0.049, "routine"),
        ];
        let out = MockReasoner::default().analyze(&ctx).unwrap();
        let ids: Vec<_> = out.tests.iter().map(|t| t.test_id.as_str()).collect();
        assert_eq!(ids, ["troponin", "ecg"]);
        assert_eq!(out.tests[0].supporting_doc_ids, [DocumentId::new("i1").unwrap()]);
        assert_eq!(out.flags, [Flag::UrgentCase]);
    }

    #[test]
    fn department_layer_requires_department() {
        let ctx = ReasoningContext::new(Layer::Department, PatientQuery::new("x"));
        assert_eq!(
            MockReasoner::default().analyze(&ctx).unwrap_err().code(),
            "INVALID_CONTEXT"
        );
        let ctx = root_ctx(vec![item_hit("i1", "t", 0.3, "routine")]);
        assert!(MockReasoner::default().analyze(&ctx).is_err());
    }

    #[test]
    fn severe_symptoms_flag_urgency() {
        let mut ctx = root_ctx(vec![dept_hit("a", "cardiology", 0.4)]);
        ctx.query.symptoms = "Severe chest pain".into();
        let out = MockReasoner::default().analyze(&ctx).unwrap();
        assert!(out.flags.contains(&Flag::UrgentCase));
    }
}
