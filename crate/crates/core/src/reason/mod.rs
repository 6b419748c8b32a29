//! Layer-specific reasoning backends.
//!
//! A backend receives a [`ReasoningContext`] (query, retrieved documents,
//! memory so far) and returns structured department or test candidates.
//! [`MockReasoner`] is a pure, auditable rule set; [`ChatReasoner`] sends
//! the rendered prompt to a chat-completion endpoint and parses the reply.

mod chat;
mod mock;
mod parse;
mod prompt;

pub use chat::{ChatReasoner, ChatReasonerConfig, LLM_API_KEY_ENV};
pub use mock::{MockReasoner, DEFAULT_TEST_SIMILARITY_THRESHOLD, URGENT_SYMPTOM_TERMS};
pub use parse::{parse_response, serialize_output};
pub use prompt::{
    render_prompt, render_repair_prompt, system_prompt, BODY_CHAR_LIMIT, MEMORY_LINE_PREFIX,
    NO_MEMORY_TEXT, PROMPT_TEMPLATE_VERSION,
};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::MemoryRecord;
use crate::types::{Document, DocumentId, PatientQuery, Tier, UrgencyLevel};
use crate::vecstore::RetrievalHit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Layer {
    Root,
    Department,
    Item,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Root => "ROOT",
            Layer::Department => "DEPARTMENT",
            Layer::Item => "ITEM",
        }
    }

    /// Tier a layer retrieves from when the two knowledge bases are kept apart.
    pub fn tier(self) -> Tier {
        match self {
            Layer::Root => Tier::Department,
            Layer::Department | Layer::Item => Tier::Item,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closed flag vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    UrgentCase,
    UncertainDiagnosis,
    NeedsFollowup,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::UrgentCase => "urgent_case",
            Flag::UncertainDiagnosis => "uncertain_diagnosis",
            Flag::NeedsFollowup => "needs_followup",
        }
    }
}

impl FromStr for Flag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "urgent_case" => Ok(Flag::UrgentCase),
            "uncertain_diagnosis" => Ok(Flag::UncertainDiagnosis),
            "needs_followup" => Ok(Flag::NeedsFollowup),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextHit {
    pub hit: RetrievalHit,
    pub document: Document,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningContext {
    pub layer: Layer,
    pub query: PatientQuery,
    pub hits: Vec<ContextHit>,
    pub memory: Vec<MemoryRecord>,
    /// Required at the department layer.
    pub department: Option<String>,
    /// Hits come from the merged single knowledge base, so their tiers may
    /// not match the layer.
    pub merged_corpus: bool,
}

impl ReasoningContext {
    pub fn new(layer: Layer, query: PatientQuery) -> Self {
        Self {
            layer,
            query,
            hits: Vec::new(),
            memory: Vec::new(),
            department: None,
            merged_corpus: false,
        }
    }

    pub fn validate(&self) -> Result<(), ReasonError> {
        if self.layer == Layer::Department && self.department.is_none() {
            return Err(ReasonError::InvalidContext(
                "department layer requires a department".into(),
            ));
        }
        if !self.merged_corpus {
            let tier = self.layer.tier();
            if let Some(h) = self.hits.iter().find(|h| h.document.tier() != tier) {
                return Err(ReasonError::InvalidContext(format!(
                    "{} layer received {} document `{}`",
                    self.layer,
                    h.document.tier(),
                    h.document.id()
                )));
            }
        }
        Ok(())
    }

    pub fn hit_ids(&self) -> BTreeSet<&DocumentId> {
        self.hits.iter().map(|h| h.document.id()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartmentCandidate {
    pub department: String,
    pub confidence: f64,
    pub rationale: String,
    pub urgency: UrgencyLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCandidate {
    pub test_id: String,
    pub name: String,
    pub department: String,
    pub confidence: f64,
    pub urgency: UrgencyLevel,
    pub rationale: String,
    pub supporting_doc_ids: Vec<DocumentId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReasoningOutput {
    /// Root layer only.
    pub departments: Vec<DepartmentCandidate>,
    /// Department and item layers only.
    pub tests: Vec<TestCandidate>,
    pub flags: Vec<Flag>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReasonError {
    #[error("invalid reasoning context: {0}")]
    InvalidContext(String),
    #[error("reasoning backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unparseable reasoning response: {0}")]
    UnparseableResponse(String),
}

impl ReasonError {
    pub fn code(&self) -> &'static str {
        match self {
            ReasonError::InvalidContext(_) => "INVALID_CONTEXT",
            ReasonError::BackendUnavailable(_) => "BACKEND_UNAVAILABLE",
            ReasonError::UnparseableResponse(_) => "UNPARSEABLE_RESPONSE",
        }
    }
}

pub trait Reasoner: Send + Sync {
    fn analyze(&self, ctx: &ReasoningContext) -> Result<ReasoningOutput, ReasonError>;
}

/// Sorts flags into vocabulary order and removes duplicates.
pub(crate) fn normalize_flags(flags: &mut Vec<Flag>) {
    flags.sort();
    flags.dedup();
}
