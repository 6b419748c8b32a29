//! Priority weights for department and test candidates.
//!
//! [`HeuristicWeigher`] computes
//! `clamp01(0.7 * confidence + 0.2 * urgency_term + 0.1 * history_term)`
//! where `urgency_term` is 0, 0.5 or 1 for routine, priority and urgent, and
//! `history_term` is 1 when any history entry shares a token with the
//! candidate's rationale. [`RemoteWeigher`] posts the serialised
//! [`ScoreRequest`] and expects `{"weight": number}`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::MemoryRecord;
use crate::reason::{DepartmentCandidate, TestCandidate};
use crate::remote::{JsonClient, RemoteEndpoint, RemoteError};
use crate::text::token_set;
use crate::types::{PatientQuery, UrgencyLevel};

pub const WEIGHT_API_KEY_ENV: &str = "HIREC_WEIGHT_API_KEY";

/// Heuristic coefficients in tenths: 0.7 confidence, 0.2 urgency, 0.1
/// history. Summing in tenths keeps the all-maximal case at exactly 1.0.
pub const CONFIDENCE_TENTHS: f64 = 7.0;
pub const URGENCY_TENTHS: f64 = 2.0;
pub const HISTORY_TENTHS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeighError {
    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),
    #[error("weight endpoint unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("weight endpoint returned a bad response: {0}")]
    RemoteBadResponse(String),
}

impl WeighError {
    pub fn code(&self) -> &'static str {
        match self {
            WeighError::InvalidCandidate(_) => "INVALID_CANDIDATE",
            WeighError::RemoteUnavailable(_) => "REMOTE_UNAVAILABLE",
            WeighError::RemoteBadResponse(_) => "REMOTE_BAD_RESPONSE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("request {index}: {source}")]
pub struct BatchWeighError {
    pub index: usize,
    #[source]
    pub source: WeighError,
}

/// A priority in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Weight(f64);

impl Weight {
    pub const ZERO: Weight = Weight(0.0);
    pub const ONE: Weight = Weight(1.0);

    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(Self(value))
    }

    /// Clamps finite values into `[0, 1]`; NaN is rejected.
    pub fn clamped(value: f64) -> Option<Self> {
        (!value.is_nan()).then(|| Self(value.clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Weight {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Weight::new(v).ok_or_else(|| format!("weight {v} outside [0, 1]"))
    }
}

impl From<Weight> for f64 {
    fn from(w: Weight) -> Self {
        w.0
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Candidate {
    Department(DepartmentCandidate),
    Test(TestCandidate),
}

impl Candidate {
    pub fn confidence(&self) -> f64 {
        match self {
            Candidate::Department(d) => d.confidence,
            Candidate::Test(t) => t.confidence,
        }
    }

    pub fn urgency(&self) -> UrgencyLevel {
        match self {
            Candidate::Department(d) => d.urgency,
            Candidate::Test(t) => t.urgency,
        }
    }

    pub fn rationale(&self) -> &str {
        match self {
            Candidate::Department(d) => &d.rationale,
            Candidate::Test(t) => &t.rationale,
        }
    }

    pub fn validate(&self) -> Result<(), WeighError> {
        let c = self.confidence();
        if !(0.0..=1.0).contains(&c) {
            return Err(WeighError::InvalidCandidate(format!("confidence {c} outside [0, 1]")));
        }
        if let Candidate::Test(t) = self {
            if t.test_id.trim().is_empty() {
                return Err(WeighError::InvalidCandidate("empty test_id".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub candidate: Candidate,
    pub query: PatientQuery,
    pub memory: Vec<MemoryRecord>,
}

pub trait Weigher: Send + Sync {
    fn score(&self, req: &ScoreRequest) -> Result<Weight, WeighError>;

    fn score_batch(&self, reqs: &[ScoreRequest]) -> Result<Vec<Weight>, BatchWeighError> {
        reqs.iter()
            .enumerate()
            .map(|(index, r)| self.score(r).map_err(|source| BatchWeighError { index, source }))
            .collect()
    }
}

pub fn urgency_term(u: UrgencyLevel) -> f64 {
    match u {
        UrgencyLevel::Routine => 0.0,
        UrgencyLevel::Priority => 0.5,
        UrgencyLevel::Urgent => 1.0,
    }
}

/// 1 when any history entry shares a token with `rationale`, else 0.
pub fn history_term(history: &[String], rationale: &str) -> f64 {
    let rationale = token_set(rationale);
    let shared = history
        .iter()
        .any(|h| token_set(h).iter().any(|t| rationale.contains(t)));
    if shared {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicWeigher;

impl Weigher for HeuristicWeigher {
    fn score(&self, req: &ScoreRequest) -> Result<Weight, WeighError> {
        req.candidate.validate()?;
        let tenths = CONFIDENCE_TENTHS * req.candidate.confidence()
            + URGENCY_TENTHS * urgency_term(req.candidate.urgency())
            + HISTORY_TENTHS * history_term(&req.query.history, req.candidate.rationale());
        let raw = tenths / 10.0;
        Ok(Weight::clamped(raw).expect("finite inputs"))
    }
}

#[derive(Deserialize)]
struct WeightResponse {
    weight: f64,
}

/// Client for an external scoring model behind `POST <url>`.
pub struct RemoteWeigher {
    client: JsonClient,
}

impl RemoteWeigher {
    pub fn new(endpoint: RemoteEndpoint) -> Self {
        Self {
            client: JsonClient::new(endpoint),
        }
    }

    /// `api_key` falls back to `HIREC_WEIGHT_API_KEY`.
    pub fn from_url(url: impl Into<String>, timeout_ms: u64, api_key: Option<String>) -> Self {
        let key = api_key.or_else(|| std::env::var(WEIGHT_API_KEY_ENV).ok());
        Self::new(
            RemoteEndpoint::new(url)
                .with_api_key(key)
                .with_timeout_ms(timeout_ms),
        )
    }
}

impl Weigher for RemoteWeigher {
    fn score(&self, req: &ScoreRequest) -> Result<Weight, WeighError> {
        req.candidate.validate()?;
        let resp: WeightResponse = self.client.post(req).map_err(|e| match e {
            RemoteError::Unavailable(m) => WeighError::RemoteUnavailable(m),
            RemoteError::BadResponse(m) => WeighError::RemoteBadResponse(m),
        })?;
        if !resp.weight.is_finite() {
            return Err(WeighError::RemoteBadResponse(format!(
                "non-finite weight {}",
                resp.weight
            )));
        }
        if !(0.0..=1.0).contains(&resp.weight) {
            tracing::warn!(weight = resp.weight, "remote weight clamped into [0, 1]");
        }
        Ok(Weight::clamped(resp.weight).expect("finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_req(confidence: f64, urgency: UrgencyLevel, rationale: &str, history: &[&str]) -> ScoreRequest {
        ScoreRequest {
            candidate: Candidate::Test(TestCandidate {
                test_id: "t".into(),
                name: "T".into(),
                department: "cardiology".into(),
                confidence,
                urgency,
                rationale: rationale.into(),
                supporting_doc_ids: vec![],
            }),
            query: PatientQuery::new("chest pain").with_history(history.iter().copied()),
            memory: vec![],
        }
    }

    /// Independent evaluation of the documented formula.
    fn formula(confidence: f64, urgency: UrgencyLevel, history_match: bool) -> f64 {
        let u = match urgency {
            UrgencyLevel::Routine => 0.0,
            UrgencyLevel::Priority => 0.5,
            UrgencyLevel::Urgent => 1.0,
        };
        let h = if history_match { 1.0 } else { 0.0 };
        (0.7 * confidence + 0.2 * u + 0.1 * h).clamp(0.0, 1.0)
    }

    #[test]
    fn extremes() {
        let w = HeuristicWeigher
            .score(&test_req(1.0, UrgencyLevel::Urgent, "prior syncope", &["syncope 2019"]))
            .unwrap();
        assert_eq!(w.value(), 1.0);
        let w = HeuristicWeigher
            .score(&test_req(0.0, UrgencyLevel::Routine, "x", &["y"]))
            .unwrap();
        assert_eq!(w.value(), 0.0);
    }

    #[test]
    fn mid_value() {
        let w = HeuristicWeigher
            .score(&test_req(0.6, UrgencyLevel::Priority, "lipids", &[]))
            .unwrap();
        assert_relative_eq!(w.value(), 0.52, epsilon = 1e-12);
        assert_relative_eq!(w.value(), formula(0.6, UrgencyLevel::Priority, false), epsilon = 1e-15);
    }

    #[test]
    fn history_matching_is_token_based() {
        assert_eq!(history_term(&["Type 2 diabetes".into()], "diabetes screen"), 1.0);
        assert_eq!(history_term(&["diabetic".into()], "diabetes screen"), 0.0);
        assert_eq!(history_term(&[], "anything"), 0.0);
    }

    #[test]
    fn invalid_candidates_rejected() {
        let err = HeuristicWeigher
            .score(&test_req(1.5, UrgencyLevel::Routine, "x", &[]))
            .unwrap_err();
        assert_eq!(err.code(), "INVALID_CANDIDATE");
        let err = HeuristicWeigher
            .score_batch(&[test_req(0.5, UrgencyLevel::Routine, "x", &[]), test_req(-0.1, UrgencyLevel::Routine, "x", &[])])
            .unwrap_err();
        assert_eq!(err.index, 1);
    }

    #[test]
    fn weight_serde_rejects_out_of_range() {
        assert!(serde_json::from_str::<Weight>("1.2").is_err());
        assert_eq!(serde_json::from_str::<Weight>("0.25").unwrap().value(), 0.25);
    }

    #[test]
    fn department_candidates_score_too() {
        let req = ScoreRequest {
            candidate: Candidate::Department(DepartmentCandidate {
                department: "cardiology".into(),
                confidence: 0.5,
                rationale: "2 retrieved cardiology document(s)".into(),
                urgency: UrgencyLevel::Urgent,
            }),
            query: PatientQuery::new("x").with_history(["cardiology clinic 2021"]),
            memory: vec![],
        };
        assert_relative_eq!(HeuristicWeigher.score(&req).unwrap().value(), 0.65, epsilon = 1e-12);
    }

    #[test]
    fn batch_empty() {
        assert!(HeuristicWeigher.score_batch(&[]).unwrap().is_empty());
    }

    fn urgency() -> impl Strategy<Value = UrgencyLevel> {
        prop_oneof![Just(UrgencyLevel::Routine), Just(UrgencyLevel::Priority), Just(UrgencyLevel::Urgent)]
    }

    proptest! {
        #[test]
        fn batch_equals_pointwise(reqs in proptest::collection::vec(
            (0.0f64..=1.0, urgency(), "[a-z ]{0,20}", proptest::collection::vec("[a-z ]{0,12}", 0..3)), 0..50)
        ) {
            let reqs: Vec<ScoreRequest> = reqs.iter().map(|(c, u, r, h)| {
                let h: Vec<&str> = h.iter().map(String::as_str).collect();
                test_req(*c, *u, r, &h)
            }).collect();
            let batch = HeuristicWeigher.score_batch(&reqs).unwrap();
            prop_assert_eq!(batch.len(), reqs.len());
            for (w, r) in batch.iter().zip(&reqs) {
                prop_assert_eq!(*w, HeuristicWeigher.score(r).unwrap());
                prop_assert!((0.0..=1.0).contains(&w.value()));
                let matched = history_term(&r.query.history, r.candidate.rationale()) == 1.0;
                prop_assert!((w.value() - formula(r.candidate.confidence(), r.candidate.urgency(), matched)).abs() < 1e-12);
            }
        }
    }
}
