//! Two-tier knowledge base: department-level guidance and per-test item
//! documents. Ingestion reads line-delimited JSON records; indexing embeds
//! `title + "\n" + body` for every document.

mod synthetic;

pub use synthetic::{
    generate_synthetic_corpus, SyntheticCorpus, SyntheticTest, DEFAULT_DEPARTMENTS,
    DEFAULT_ITEMS_PER_DEPARTMENT,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::embed::{BatchEmbedError, EmbedError, Embedder};
use crate::types::{Document, DocumentError, DocumentId, Tier};
use crate::vecstore::{IndexEntry, VecStoreError};
use crate::VectorIndex;

const REQUIRED_FIELDS: [&str; 5] = ["id", "tier", "department", "title", "body"];

/// One rejected record (or an IO failure, which aborts ingestion).
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate document id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: missing field `{field}`")]
    MissingField { field: String, line: usize },
    #[error("line {line}: invalid field `{field}`: {message}")]
    InvalidField {
        field: String,
        line: usize,
        message: String,
    },
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::Io(_) => "IO_ERROR",
            IngestError::Parse { .. } => "PARSE_ERROR",
            IngestError::DuplicateId { .. } => "DUPLICATE_ID",
            IngestError::MissingField { .. } => "MISSING_FIELD",
            IngestError::InvalidField { .. } => "INVALID_FIELD",
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Io(_) => None,
            IngestError::Parse { line, .. }
            | IngestError::DuplicateId { line, .. }
            | IngestError::MissingField { line, .. }
            | IngestError::InvalidField { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate document id `{0}`")]
pub struct DuplicateDocument(pub DocumentId);

#[derive(Debug, Error)]
pub enum BuildIndexError {
    #[error("embedding `{doc_id}`: {source}")]
    Embed {
        doc_id: DocumentId,
        #[source]
        source: EmbedError,
    },
    #[error("indexing `{doc_id}`: {source}")]
    Store {
        doc_id: DocumentId,
        #[source]
        source: VecStoreError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    departments_tier: Vec<Document>,
    items_tier: Vec<Document>,
    department_set: BTreeSet<String>,
    by_id: HashMap<DocumentId, (Tier, usize)>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(
        docs: impl IntoIterator<Item = Document>,
    ) -> Result<Self, DuplicateDocument> {
        let mut kb = Self::new();
        for d in docs {
            kb.insert(d)?;
        }
        Ok(kb)
    }

    pub fn insert(&mut self, doc: Document) -> Result<(), DuplicateDocument> {
        if self.by_id.contains_key(doc.id()) {
            return Err(DuplicateDocument(doc.id().clone()));
        }
        let tier = doc.tier();
        let list = match tier {
            Tier::Department => {
                self.department_set.insert(doc.department().to_string());
                &mut self.departments_tier
            }
            Tier::Item => &mut self.items_tier,
        };
        self.by_id.insert(doc.id().clone(), (tier, list.len()));
        list.push(doc);
        Ok(())
    }

    pub fn departments_tier(&self) -> &[Document] {
        &self.departments_tier
    }

    pub fn items_tier(&self) -> &[Document] {
        &self.items_tier
    }

    /// Departments that own a department-tier document.
    pub fn department_set(&self) -> &BTreeSet<String> {
        &self.department_set
    }

    pub fn len(&self) -> usize {
        self.departments_tier.len() + self.items_tier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &DocumentId) -> Option<&Document> {
        self.by_id.get(id).map(|&(tier, i)| match tier {
            Tier::Department => &self.departments_tier[i],
            Tier::Item => &self.items_tier[i],
        })
    }

    /// Department tier first, then item tier, each in insertion order.
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.departments_tier.iter().chain(&self.items_tier)
    }

    /// Item-tier departments with no department-tier document. Reported,
    /// never enforced.
    pub fn orphan_item_departments(&self) -> BTreeSet<String> {
        self.items_tier
            .iter()
            .map(|d| d.department())
            .filter(|d| !self.department_set.contains(*d))
            .map(str::to_string)
            .collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.orphan_item_departments()
            .into_iter()
            .map(|d| format!("item-tier department `{d}` has no department-tier document"))
            .collect()
    }

    /// Serialises every document as one JSON object per line, in
    /// [`Self::documents`] order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in self.documents() {
            out.push_str(&serde_json::to_string(d).expect("documents serialise"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_jsonl())
    }
}

/// Outcome of ingesting a document file.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub kb: KnowledgeBase,
    pub rejected: Vec<IngestError>,
    /// Non-blank lines seen.
    pub lines: usize,
}

impl IngestReport {
    pub fn loaded(&self) -> usize {
        self.kb.len()
    }

    pub fn is_clean(&self) -> bool {
        self.rejected.is_empty()
    }
}

pub fn ingest(path: impl AsRef<Path>) -> Result<IngestReport, IngestError> {
    let text = fs::read_to_string(path)?;
    Ok(ingest_str(&text))
}

/// Ingests line-delimited records. Line numbers are 1-based; blank lines
/// are skipped but still counted for numbering.
pub fn ingest_str(text: &str) -> IngestReport {
    let mut report = IngestReport::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let result = parse_record(raw, line).and_then(|doc| {
            report.kb.insert(doc).map_err(|DuplicateDocument(id)| IngestError::DuplicateId {
                id: id.to_string(),
                line,
            })
        });
        if let Err(e) = result {
            tracing::debug!("{e}");
            report.rejected.push(e);
        }
    }
    report
}

fn parse_record(raw: &str, line: usize) -> Result<Document, IngestError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| IngestError::Parse {
        line,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| IngestError::Parse {
        line,
        message: "record is not a JSON object".into(),
    })?;
    let invalid = |field: &str, message: &str| IngestError::InvalidField {
        field: field.into(),
        line,
        message: message.into(),
    };
    let mut fields = BTreeMap::new();
    for field in REQUIRED_FIELDS {
        let v = obj.get(field).ok_or_else(|| IngestError::MissingField {
            field: field.into(),
            line,
        })?;
        let s = v.as_str().ok_or_else(|| invalid(field, "expected a string"))?;
        fields.insert(field, s);
    }
    let tier = match fields["tier"] {
        "department" => Tier::Department,
        "item" => Tier::Item,
        other => return Err(invalid("tier", &format!("unknown tier `{other}`"))),
    };
    let mut metadata = BTreeMap::new();
    match obj.get("metadata") {
        None | Some(Value::Null) => {}
        Some(Value::Object(m)) => {
            for (k, v) in m {
                let s = match v {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    Value::Bool(b) => b.to_string(),
                    _ => return Err(invalid("metadata", &format!("value of `{k}` must be scalar"))),
                };
                metadata.insert(k.clone(), s);
            }
        }
        Some(_) => return Err(invalid("metadata", "expected an object")),
    }
    let id = DocumentId::new(fields["id"]).map_err(|e| invalid("id", &e.to_string()))?;
    Document::new(id, tier, fields["department"], fields["title"], fields["body"], metadata).map_err(
        |e| match e {
            DocumentError::MissingTestId(_) => IngestError::MissingField {
                field: "metadata.test_id".into(),
                line,
            },
            DocumentError::EmptyBody(_) => invalid("body", "must be non-empty"),
            DocumentError::EmptyDepartment(_) => invalid("department", "must be non-empty"),
            DocumentError::EmptyId => invalid("id", "must be non-empty"),
        },
    )
}

/// Embeds every document and adds it to `store`. Returns the number of
/// entries added.
pub fn build_index(
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    store: &mut VectorIndex,
) -> Result<usize, BuildIndexError> {
    let docs: Vec<&Document> = kb.documents().collect();
    let texts: Vec<String> = docs.iter().map(|d| d.embedding_text()).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vectors = embedder
        .embed_batch(&refs)
        .map_err(|BatchEmbedError { index, source }| BuildIndexError::Embed {
            doc_id: docs[index].id().clone(),
            source,
        })?;
    for (doc, vector) in docs.iter().zip(vectors) {
        store
            .add(IndexEntry {
                doc_id: doc.id().clone(),
                vector,
                tier: doc.tier(),
                department: doc.department().to_string(),
            })
            .map_err(|source| BuildIndexError::Store {
                doc_id: doc.id().clone(),
                source,
            })?;
    }
    Ok(docs.len())
}

/// Builds a fresh index sized to the embedder's dimension (or
/// `fallback_dimension` when the embedder has not discovered one yet).
pub fn index_knowledge_base(
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    fallback_dimension: usize,
) -> Result<VectorIndex, BuildIndexError> {
    if embedder.dimension().is_none() {
        // Remote embedders learn their dimension from the first reply.
        if let Some(doc) = kb.documents().next() {
            embedder
                .embed(&doc.embedding_text())
                .map_err(|source| BuildIndexError::Embed {
                    doc_id: doc.id().clone(),
                    source,
                })?;
        }
    }
    let mut store = VectorIndex::new(embedder.dimension().unwrap_or(fallback_dimension));
    build_index(kb, embedder, &mut store)?;
    Ok(store)
}
