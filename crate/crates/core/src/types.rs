//! Domain types shared across the engine: documents, patient queries,
//! urgency, and the run configuration (ablation switches + pipeline params).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on a plausible patient age in years.
pub const MAX_AGE_YEARS: i64 = 150;

/// Metadata key every item-tier document must carry.
pub const TEST_ID_KEY: &str = "test_id";

/// Metadata key holding a document's urgency ("routine" | "priority" | "urgent").
pub const URGENCY_KEY: &str = "urgency";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("document id must be non-empty")]
    EmptyId,
    #[error("document `{0}` has an empty body")]
    EmptyBody(String),
    #[error("document `{0}` has an empty department")]
    EmptyDepartment(String),
    #[error("item document `{0}` is missing metadata key `test_id`")]
    MissingTestId(String),
}

impl DocumentError {
    pub fn code(&self) -> &'static str {
        match self {
            DocumentError::MissingTestId(_) => "MISSING_FIELD",
            _ => "INVALID_FIELD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("symptoms must be non-empty")]
    EmptySymptoms,
    #[error("age {0} is outside [0, {MAX_AGE_YEARS}]")]
    AgeOutOfRange(i64),
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::EmptySymptoms => "EMPTY_SYMPTOMS",
            QueryError::AgeOutOfRange(_) => "AGE_OUT_OF_RANGE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ParamsError {
    #[error("`{0}` must be a positive integer")]
    NotPositive(&'static str),
    #[error("min_weight {0} is outside [0, 1]")]
    MinWeightOutOfRange(f64),
}

/// Identifier of a knowledge-base document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DocumentId(String);

impl DocumentId {
    pub fn new(value: impl Into<String>) -> Result<Self, DocumentError> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err(DocumentError::EmptyId);
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for DocumentId {
    type Error = DocumentError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<DocumentId> for String {
    fn from(id: DocumentId) -> Self {
        id.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Knowledge-base tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Department,
    Item,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Department => "department",
            Tier::Item => "item",
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Tier::Department => 0,
            Tier::Item => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Tier::Department),
            1 => Some(Tier::Item),
            _ => None,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Canonical department name: lowercase ASCII, runs of whitespace, `-`
/// and `/` collapsed to a single underscore, trimmed.
pub fn canonical_department(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_sep = false;
    for c in name.trim().chars() {
        if c.is_whitespace() || c == '-' || c == '/' || c == '_' {
            pending_sep = !out.is_empty();
            continue;
        }
        if pending_sep {
            out.push('_');
            pending_sep = false;
        }
        out.push(c.to_ascii_lowercase());
    }
    out
}

/// One knowledge-base entry. Only constructible through [`Document::new`],
/// so every observable instance satisfies the document invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDocument", into = "RawDocument")]
pub struct Document {
    id: DocumentId,
    tier: Tier,
    department: String,
    title: String,
    body: String,
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct RawDocument {
    id: DocumentId,
    tier: Tier,
    department: String,
    title: String,
    body: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

impl TryFrom<RawDocument> for Document {
    type Error = DocumentError;

    fn try_from(raw: RawDocument) -> Result<Self, Self::Error> {
        Document::new(raw.id, raw.tier, &raw.department, raw.title, raw.body, raw.metadata)
    }
}

impl From<Document> for RawDocument {
    fn from(d: Document) -> Self {
        RawDocument {
            id: d.id,
            tier: d.tier,
            department: d.department,
            title: d.title,
            body: d.body,
            metadata: d.metadata,
        }
    }
}

impl Document {
    pub fn new(
        id: DocumentId,
        tier: Tier,
        department: &str,
        title: impl Into<String>,
        body: impl Into<String>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, DocumentError> {
        let body = body.into();
        if body.trim().is_empty() {
            return Err(DocumentError::EmptyBody(id.0));
        }
        let department = canonical_department(department);
        if department.is_empty() {
            return Err(DocumentError::EmptyDepartment(id.0));
        }
        if tier == Tier::Item
            && metadata
                .get(TEST_ID_KEY)
                .is_none_or(|v| v.trim().is_empty())
        {
            return Err(DocumentError::MissingTestId(id.0));
        }
        Ok(Self {
            id,
            tier,
            department,
            title: title.into(),
            body,
            metadata,
        })
    }

    pub fn id(&self) -> &DocumentId {
        &self.id
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn department(&self) -> &str {
        &self.department
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// The `test_id` metadata value; always present for item-tier documents.
    pub fn test_id(&self) -> Option<&str> {
        self.metadata.get(TEST_ID_KEY).map(String::as_str)
    }

    /// Urgency declared in metadata, `Routine` when absent or unrecognised.
    pub fn urgency(&self) -> UrgencyLevel {
        self.metadata
            .get(URGENCY_KEY)
            .and_then(|u| u.parse().ok())
            .unwrap_or(UrgencyLevel::Routine)
    }

    /// Text fed to the embedder: title, newline, body.
    pub fn embedding_text(&self) -> String {
        format!("{}\n{}", self.title, self.body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Sex {
    F,
    M,
    Other,
}

/// Pipeline input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientQuery {
    pub symptoms: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    /// Keys state their unit, e.g. `heart_rate_bpm`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vitals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<String>,
}

impl PatientQuery {
    pub fn new(symptoms: impl Into<String>) -> Self {
        Self {
            symptoms: symptoms.into(),
            age: None,
            sex: None,
            vitals: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    pub fn with_age(mut self, age: i64) -> Self {
        self.age = Some(age);
        self
    }

    pub fn with_history<I, S>(mut self, history: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.history = history.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        validate_query(self)
    }
}

pub fn validate_query(q: &PatientQuery) -> Result<(), QueryError> {
    if q.symptoms.trim().is_empty() {
        return Err(QueryError::EmptySymptoms);
    }
    match q.age {
        Some(age) if !(0..=MAX_AGE_YEARS).contains(&age) => Err(QueryError::AgeOutOfRange(age)),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UrgencyLevel {
    Routine,
    Priority,
    Urgent,
}

impl UrgencyLevel {
    pub const ALL: [UrgencyLevel; 3] = [
        UrgencyLevel::Routine,
        UrgencyLevel::Priority,
        UrgencyLevel::Urgent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UrgencyLevel::Routine => "ROUTINE",
            UrgencyLevel::Priority => "PRIORITY",
            UrgencyLevel::Urgent => "URGENT",
        }
    }
}

impl std::str::FromStr for UrgencyLevel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "routine" => Ok(UrgencyLevel::Routine),
            "priority" => Ok(UrgencyLevel::Priority),
            "urgent" => Ok(UrgencyLevel::Urgent),
            _ => Err(()),
        }
    }
}

impl fmt::Display for UrgencyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Switches that disable one architectural component each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub memory_enabled: bool,
    pub department_layer_enabled: bool,
    pub dual_kb_enabled: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            memory_enabled: true,
            department_layer_enabled: true,
            dual_kb_enabled: true,
        }
    }
}

impl AblationConfig {
    pub fn full() -> Self {
        Self::default()
    }

    pub fn without_memory() -> Self {
        Self {
            memory_enabled: false,
            ..Self::default()
        }
    }

    pub fn without_department_layer() -> Self {
        Self {
            department_layer_enabled: false,
            ..Self::default()
        }
    }

    pub fn single_kb() -> Self {
        Self {
            dual_kb_enabled: false,
            ..Self::default()
        }
    }
}

/// Retrieval depths and fan-out of one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub root_top_k: usize,
    pub dept_top_k: usize,
    pub max_departments: usize,
    pub max_recommendations: usize,
    pub min_weight: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            root_top_k: 10,
            dept_top_k: 10,
            max_departments: 3,
            max_recommendations: 10,
            min_weight: 0.0,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        for (name, v) in [
            ("root_top_k", self.root_top_k),
            ("dept_top_k", self.dept_top_k),
            ("max_departments", self.max_departments),
            ("max_recommendations", self.max_recommendations),
        ] {
            if v == 0 {
                return Err(ParamsError::NotPositive(name));
            }
        }
        if !(0.0..=1.0).contains(&self.min_weight) {
            return Err(ParamsError::MinWeightOutOfRange(self.min_weight));
        }
        Ok(())
    }
}
