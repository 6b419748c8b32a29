use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::SyntheticCorpus;
use crate::types::{PatientQuery, Sex, UrgencyLevel};

pub const MIN_CRS: u8 = 1;
pub const MAX_CRS: u8 = 5;

/// One ground-truth case. `relevant_tests` is G, `critical_tests` is C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub id: String,
    pub query: PatientQuery,
    pub relevant_tests: BTreeSet<String>,
    #[serde(default)]
    pub critical_tests: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crs_annotations: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaseError {
    #[error("case `{id}`: relevant_tests must be non-empty")]
    EmptyRelevant { id: String },
    #[error("case `{id}`: critical test `{test}` is not among the relevant tests")]
    CriticalNotRelevant { id: String, test: String },
    #[error("case `{id}`: CRS annotation {value} outside 1..=5")]
    CrsOutOfRange { id: String, value: u8 },
    #[error("case id must be non-empty")]
    EmptyId,
    #[error("case `{id}`: {message}")]
    InvalidQuery { id: String, message: String },
}

impl EvalCase {
    pub fn validate(&self) -> Result<(), CaseError> {
        let id = || self.id.clone();
        if self.id.trim().is_empty() {
            return Err(CaseError::EmptyId);
        }
        if self.relevant_tests.is_empty() {
            return Err(CaseError::EmptyRelevant { id: id() });
        }
        if let Some(test) = self.critical_tests.difference(&self.relevant_tests).next() {
            return Err(CaseError::CriticalNotRelevant {
                id: id(),
                test: test.clone(),
            });
        }
        if let Some(&value) = self
            .crs_annotations
            .iter()
            .flatten()
            .find(|v| !(MIN_CRS..=MAX_CRS).contains(*v))
        {
            return Err(CaseError::CrsOutOfRange { id: id(), value });
        }
        self.query.validate().map_err(|e| CaseError::InvalidQuery {
            id: id(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Error)]
pub enum CaseFileError {
    #[error("cannot read case file: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: CaseError },
    #[error("line {line}: duplicate case id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("case file contains no cases")]
    Empty,
}

impl CaseFileError {
    pub fn code(&self) -> &'static str {
        match self {
            CaseFileError::Io(_) => "IO_ERROR",
            CaseFileError::Malformed { .. } => "MALFORMED_CASE",
            CaseFileError::Invalid { .. } => "INVALID_CASE",
            CaseFileError::DuplicateId { .. } => "DUPLICATE_ID",
            CaseFileError::Empty => "EMPTY_CASES",
        }
    }
}

/// Parses a JSONL case file; blank lines are skipped, any bad line fails
/// the whole file.
pub fn parse_cases(text: &str) -> Result<Vec<EvalCase>, CaseFileError> {
    let mut cases = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let case: EvalCase = serde_json::from_str(raw).map_err(|e| CaseFileError::Malformed {
            line,
            message: e.to_string(),
        })?;
        case.validate().map_err(|source| CaseFileError::Invalid { line, source })?;
        if !ids.insert(case.id.clone()) {
            return Err(CaseFileError::DuplicateId { line, id: case.id });
        }
        cases.push(case);
    }
    if cases.is_empty() {
        return Err(CaseFileError::Empty);
    }
    Ok(cases)
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<EvalCase>, CaseFileError> {
    parse_cases(&fs::read_to_string(path)?)
}

pub fn cases_to_jsonl(cases: &[EvalCase]) -> String {
    cases
        .iter()
        .map(|c| serde_json::to_string(c).expect("cases serialise") + "\n")
        .collect()
}

/// Seeded benchmark over a synthetic corpus. Each case takes one or two
/// keywords of a target test as its symptoms; G is every test whose
/// document mentions one of those keywords and C is the urgent subset of G.
pub fn generate_eval_cases(corpus: &SyntheticCorpus, n: usize, seed: u64) -> Vec<EvalCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let departments: Vec<&str> = {
        let mut seen = Vec::new();
        for t in &corpus.tests {
            if !seen.contains(&t.department.as_str()) {
                seen.push(t.department.as_str());
            }
        }
        seen
    };
    if departments.is_empty() {
        return Vec::new();
    }
    (0..n)
        .map(|i| {
            let dept = departments[i % departments.len()];
            let tests: Vec<_> = corpus.tests.iter().filter(|t| t.department == dept).collect();
            let target = tests.choose(&mut rng).expect("departments have tests");
            let mut keywords: Vec<&str> = target.keywords.iter().map(String::as_str).collect();
            keywords.shuffle(&mut rng);
            keywords.truncate(rng.random_range(1..=2));
            let relevant = corpus.relevant_for(keywords.iter().copied());
            let critical = relevant
                .iter()
                .filter(|id| corpus.test(id).is_some_and(|t| t.urgency == UrgencyLevel::Urgent))
                .cloned()
                .collect();
            let mut query = PatientQuery::new(keywords.join(" and ")).with_age(rng.random_range(18..=90));
            query.sex = Some(if rng.random_bool(0.5) { Sex::F } else { Sex::M });
            EvalCase {
                id: format!("case-{:03}", i + 1),
                query,
                relevant_tests: relevant,
                critical_tests: critical,
                crs_annotations: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{generate_synthetic_corpus, DEFAULT_DEPARTMENTS};

    fn case(g: &[&str], c: &[&str]) -> EvalCase {
        EvalCase {
            id: "c1".into(),
            query: PatientQuery::new("pain"),
            relevant_tests: g.iter().map(|s| s.to_string()).collect(),
            critical_tests: c.iter().map(|s| s.to_string()).collect(),
            crs_annotations: None,
        }
    }

    #[test]
    fn validation() {
        assert!(case(&["a"], &["a"]).validate().is_ok());
        assert!(matches!(case(&[], &[]).validate(), Err(CaseError::EmptyRelevant { .. })));
        assert!(matches!(
            case(&["a"], &["b"]).validate(),
            Err(CaseError::CriticalNotRelevant { .. })
        ));
        let mut c = case(&["a"], &[]);
        c.crs_annotations = Some(vec![3, 6]);
        assert!(matches!(c.validate(), Err(CaseError::CrsOutOfRange { value: 6, .. })));
    }

    #[test]
    fn parse_file() {
        let text = r#"{"id":"a","query":{"symptoms":"chest pain","age":50},"relevant_tests":["ecg"],"critical_tests":["ecg"],"crs_annotations":[4,5]}

{"id":"b","query":{"symptoms":"thirst"},"relevant_tests":["hba1c"],"critical_tests":[]}
"#;
        let cases = parse_cases(text).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].crs_annotations, Some(vec![4, 5]));
        assert_eq!(parse_cases(&cases_to_jsonl(&cases)).unwrap(), cases);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_cases("").unwrap_err().code(), "EMPTY_CASES");
        let err = parse_cases("{\"id\":\"a\"}\n").unwrap_err();
        assert_eq!(err.code(), "MALFORMED_CASE");
        let line = r#"{"id":"a","query":{"symptoms":"x"},"relevant_tests":["t"]}"#;
        let err = parse_cases(&format!("{line}\n{line}\n")).unwrap_err();
        assert!(matches!(err, CaseFileError::DuplicateId { line: 2, .. }));
        let err = parse_cases(r#"{"id":"a","query":{"symptoms":" "},"relevant_tests":["t"]}"#).unwrap_err();
        assert_eq!(err.code(), "INVALID_CASE");
    }

    #[test]
    fn generated_cases_are_valid_and_deterministic() {
        let corpus = generate_synthetic_corpus(7, &DEFAULT_DEPARTMENTS, 4);
        let a = generate_eval_cases(&corpus, 12, 11);
        assert_eq!(a, generate_eval_cases(&corpus, 12, 11));
        assert_eq!(a.len(), 12);
        for c in &a {
            c.validate().unwrap();
            for t in &c.relevant_tests {
                assert!(corpus.test(t).is_some());
            }
        }
    }
}
