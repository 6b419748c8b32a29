//! Structured-output parsing. Replies may wrap the JSON object in prose;
//! the first object that fits the layer's schema wins.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DepartmentCandidate, Flag, Layer, ReasonError, ReasoningOutput, TestCandidate};
use crate::types::{canonical_department, DocumentId, UrgencyLevel};

#[derive(Serialize, Deserialize)]
struct DepartmentsWire {
    departments: Vec<DepartmentWire>,
    #[serde(default)]
    flags: Vec<String>,
    #[serde(default)]
    summary: String,
}

#[derive(Serialize, Deserialize)]
struct DepartmentWire {
    department: String,
    confidence: f64,
    #[serde(default)]
    urgency: Option<String>,
    #[serde(default)]
    rationale: String,
}

#[derive(Serialize, Deserialize)]
struct TestsWire {
    tests: Vec<TestWire>,
    #[serde(default)]
    flags: Vec<String>,
    #[serde(default)]
    summary: String,
}

#[derive(Serialize, Deserialize)]
struct TestWire {
    test_id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    department: String,
    confidence: f64,
    #[serde(default)]
    urgency: Option<String>,
    #[serde(default)]
    rationale: String,
    #[serde(default)]
    supporting_doc_ids: Vec<String>,
}

fn urgency(raw: Option<&str>) -> UrgencyLevel {
    match raw {
        None => UrgencyLevel::Routine,
        Some(s) => s.parse().unwrap_or_else(|_| {
            tracing::warn!("unknown urgency `{s}`, using ROUTINE");
            UrgencyLevel::Routine
        }),
    }
}

fn clamp_confidence(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        v
    } else {
        tracing::warn!("confidence {v} clamped into [0, 1]");
        v.clamp(0.0, 1.0)
    }
}

fn flags(raw: Vec<String>) -> Vec<Flag> {
    raw.into_iter()
        .filter_map(|f| match f.parse() {
            Ok(flag) => Some(flag),
            Err(()) => {
                tracing::warn!("dropping unknown flag `{f}`");
                None
            }
        })
        .collect()
}

fn from_departments(w: DepartmentsWire) -> ReasoningOutput {
    ReasoningOutput {
        departments: w
            .departments
            .into_iter()
            .filter_map(|d| {
                let department = canonical_department(&d.department);
                if department.is_empty() {
                    tracing::warn!("dropping department candidate with empty name");
                    return None;
                }
                Some(DepartmentCandidate {
                    department,
                    confidence: clamp_confidence(d.confidence),
                    rationale: d.rationale,
                    urgency: urgency(d.urgency.as_deref()),
                })
            })
            .collect(),
        tests: Vec::new(),
        flags: flags(w.flags),
        summary: w.summary,
    }
}

fn from_tests(w: TestsWire) -> ReasoningOutput {
    ReasoningOutput {
        departments: Vec::new(),
        tests: w
            .tests
            .into_iter()
            .filter_map(|t| {
                if t.test_id.trim().is_empty() {
                    tracing::warn!("dropping test candidate with empty test_id");
                    return None;
                }
                Some(TestCandidate {
                    test_id: t.test_id,
                    name: t.name,
                    department: canonical_department(&t.department),
                    confidence: clamp_confidence(t.confidence),
                    urgency: urgency(t.urgency.as_deref()),
                    rationale: t.rationale,
                    supporting_doc_ids: t
                        .supporting_doc_ids
                        .into_iter()
                        .filter_map(|id| DocumentId::new(id).ok())
                        .collect(),
                })
            })
            .collect(),
        flags: flags(w.flags),
        summary: w.summary,
    }
}

fn convert(layer: Layer, value: Value) -> Option<ReasoningOutput> {
    match layer {
        Layer::Root => serde_json::from_value::<DepartmentsWire>(value)
            .ok()
            .map(from_departments),
        Layer::Department | Layer::Item => {
            serde_json::from_value::<TestsWire>(value).ok().map(from_tests)
        }
    }
}

/// Parses a (possibly chatty) reply into the layer's output structure.
pub fn parse_response(layer: Layer, raw: &str) -> Result<ReasoningOutput, ReasonError> {
    for (start, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        if let Some(Ok(value @ Value::Object(_))) = stream.next() {
            if let Some(out) = convert(layer, value) {
                return Ok(out);
            }
        }
    }
    Err(ReasonError::UnparseableResponse(format!(
        "no JSON object matching the {layer} schema found"
    )))
}

/// Serialises an output in the wire schema `parse_response` accepts.
pub fn serialize_output(layer: Layer, out: &ReasoningOutput) -> String {
    let flags = out.flags.iter().map(|f| f.as_str().to_string()).collect();
    match layer {
        Layer::Root => serde_json::to_string(&DepartmentsWire {
            departments: out
                .departments
                .iter()
                .map(|d| DepartmentWire {
                    department: d.department.clone(),
                    confidence: d.confidence,
                    urgency: Some(d.urgency.as_str().to_string()),
                    rationale: d.rationale.clone(),
                })
                .collect(),
            flags,
            summary: out.summary.clone(),
        }),
        Layer::Department | Layer::Item => serde_json::to_string(&TestsWire {
            tests: out
                .tests
                .iter()
                .map(|t| TestWire {
                    test_id: t.test_id.clone(),
                    name: t.name.clone(),
                    department: t.department.clone(),
                    confidence: t.confidence,
                    urgency: Some(t.urgency.as_str().to_string()),
                    rationale: t.rationale.clone(),
                    supporting_doc_ids: t
                        .supporting_doc_ids
                        .iter()
                        .map(|id| id.as_str().to_string())
                        .collect(),
                })
                .collect(),
            flags,
            summary: out.summary.clone(),
        }),
    }
    .expect("wire types serialise")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bare_root_json() {
        let raw = r#"{"departments":[{"department":"cardiology","confidence":0.8,"urgency":"URGENT","rationale":"chest pain"}],"flags":[],"summary":"s"}"#;
        let out = parse_response(Layer::Root, raw).unwrap();
        assert_eq!(out.departments.len(), 1);
        assert_eq!(out.departments[0].confidence, 0.8);
        assert_eq!(out.departments[0].urgency, UrgencyLevel::Urgent);
    }

    #[test]
    fn prose_wrapped_json_equals_bare() {
        let bare = r#"{"departments":[{"department":"cardiology","confidence":0.8}]}"#;
        let chatty = format!("Sure! Based on {{the evidence}} here you go:\n```json\n{bare}\n```\nHope that helps.");
        assert_eq!(
            parse_response(Layer::Root, &chatty).unwrap(),
            parse_response(Layer::Root, bare).unwrap()
        );
    }

    #[test]
    fn refusal_is_unparseable() {
        let err = parse_response(Layer::Root, "I cannot help").unwrap_err();
        assert_eq!(err.code(), "UNPARSEABLE_RESPONSE");
        // A tests object does not satisfy the root schema.
        assert!(parse_response(Layer::Root, r#"{"tests":[]}"#).is_err());
    }

    #[test]
    fn clamps_and_drops_unknown_flags() {
        let raw = r#"{"tests":[{"test_id":"ecg","confidence":1.7,"urgency":"soon"},{"test_id":" ","confidence":0.5}],"flags":["urgent_case","panic"]}"#;
        let out = parse_response(Layer::Item, raw).unwrap();
        assert_eq!(out.tests.len(), 1);
        assert_eq!(out.tests[0].confidence, 1.0);
        assert_eq!(out.tests[0].urgency, UrgencyLevel::Routine);
        assert_eq!(out.flags, [Flag::UrgentCase]);
    }

    fn flag() -> impl Strategy<Value = Flag> {
        prop_oneof![Just(Flag::UrgentCase), Just(Flag::UncertainDiagnosis), Just(Flag::NeedsFollowup)]
    }

    fn urgency_level() -> impl Strategy<Value = UrgencyLevel> {
        prop_oneof![Just(UrgencyLevel::Routine), Just(UrgencyLevel::Priority), Just(UrgencyLevel::Urgent)]
    }

    fn dept_candidate() -> impl Strategy<Value = DepartmentCandidate> {
        ("[a-z]{1,8}(_[a-z]{1,6})?", 0.0f64..=1.0, ".{0,30}", urgency_level()).prop_map(
            |(department, confidence, rationale, urgency)| DepartmentCandidate {
                department,
                confidence,
                rationale,
                urgency,
            },
        )
    }

    fn test_candidate() -> impl Strategy<Value = TestCandidate> {
        (
            "[a-z0-9_]{1,10}",
            ".{0,20}",
            "[a-z]{0,8}",
            0.0f64..=1.0,
            urgency_level(),
            ".{0,30}",
            proptest::collection::vec("[a-z0-9-]{1,8}", 0..3),
        )
            .prop_map(|(test_id, name, department, confidence, urgency, rationale, ids)| TestCandidate {
                test_id,
                name,
                department,
                confidence,
                urgency,
                rationale,
                supporting_doc_ids: ids.into_iter().map(|i| DocumentId::new(i).unwrap()).collect(),
            })
    }

    proptest! {
        #[test]
        fn root_roundtrip(
            departments in proptest::collection::vec(dept_candidate(), 0..4),
            flags in proptest::collection::vec(flag(), 0..3),
            summary in ".{0,40}",
        ) {
            let out = ReasoningOutput { departments, tests: vec![], flags, summary };
            prop_assert_eq!(parse_response(Layer::Root, &serialize_output(Layer::Root, &out)).unwrap(), out);
        }

        #[test]
        fn tests_roundtrip(
            tests in proptest::collection::vec(test_candidate(), 0..4),
            flags in proptest::collection::vec(flag(), 0..3),
            summary in ".{0,40}",
            item in any::<bool>(),
        ) {
            let layer = if item { Layer::Item } else { Layer::Department };
            let out = ReasoningOutput { departments: vec![], tests, flags, summary };
            prop_assert_eq!(parse_response(layer, &serialize_output(layer, &out)).unwrap(), out);
        }
    }
}
