//! Three-layer orchestration.
//!
//! 1. Root: embed the query, search the department tier (or the merged
//!    corpus), ask the reasoner for departments, weigh them and keep the top
//!    `max_departments` with positive weight.
//! 2. Department: for each kept department, search its item documents and
//!    ask the reasoner for test candidates. Departments run in parallel;
//!    their trace steps and memory records are appended in name order.
//! 3. Item: pool candidates, drop tests already claimed by an earlier
//!    department's memory record, re-run the reasoner over the supporting
//!    documents, keep the highest-confidence candidate per test, weigh,
//!    filter by `min_weight`, sort and truncate.
//!
//! With the department layer disabled, the root step additionally runs an
//! unfiltered item-tier search whose hits feed the item layer directly.

mod explain;
mod memory;

pub use explain::explain;
pub use memory::{Memory, MemoryRecord};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::{EmbedError, Embedder, EmbedderConfigError, HashedEmbedder};
use crate::kb::KnowledgeBase;
use crate::reason::{
    normalize_flags, render_prompt, ContextHit, Flag, Layer, MockReasoner, ReasonError, Reasoner,
    ReasoningContext, ReasoningOutput, TestCandidate,
};
use crate::types::{
    AblationConfig, DocumentId, ParamsError, PatientQuery, PipelineParams, QueryError, Tier,
    UrgencyLevel,
};
use crate::vecstore::{hit_order, RetrievalHit, SearchFilter, VecStoreError};
use crate::weigh::{Candidate, HeuristicWeigher, ScoreRequest, Weigher, WeighError, Weight};
use crate::{EmbeddingVector, VectorIndex};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("embedder produces {embedder}-dimensional vectors but the index holds {index}")]
    DimensionMismatch { embedder: usize, index: usize },
    #[error("index entry `{0}` has no document in the knowledge base")]
    UnknownDocument(DocumentId),
    #[error(transparent)]
    Embedder(#[from] EmbedderConfigError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            EngineError::UnknownDocument(_) => "UNKNOWN_DOCUMENT",
            EngineError::Embedder(_) => "INVALID_EMBEDDER",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    InvalidQuery(#[from] QueryError),
    #[error(transparent)]
    InvalidParams(#[from] ParamsError),
    #[error("{layer} layer: embedding failed: {source}")]
    Embed { layer: Layer, source: EmbedError },
    #[error("{layer} layer: search failed: {source}")]
    Search { layer: Layer, source: VecStoreError },
    #[error("{layer} layer{}: {source}", department.as_deref().map(|d| format!(" ({d})")).unwrap_or_default())]
    Reason {
        layer: Layer,
        department: Option<String>,
        source: ReasonError,
    },
    #[error("{layer} layer: weighting failed: {source}")]
    Weigh { layer: Layer, source: WeighError },
    #[error("{layer} layer: retrieved document `{doc_id}` is missing from the knowledge base")]
    UnknownDocument { layer: Layer, doc_id: DocumentId },
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::InvalidQuery(e) => e.code(),
            PipelineError::InvalidParams(_) => "INVALID_PARAMS",
            PipelineError::Embed { source, .. } => source.code(),
            PipelineError::Search { source, .. } => source.code(),
            PipelineError::Reason { source, .. } => source.code(),
            PipelineError::Weigh { source, .. } => source.code(),
            PipelineError::UnknownDocument { .. } => "UNKNOWN_DOCUMENT",
        }
    }

    pub fn layer(&self) -> Option<Layer> {
        match self {
            PipelineError::InvalidQuery(_) | PipelineError::InvalidParams(_) => None,
            PipelineError::Embed { layer, .. }
            | PipelineError::Search { layer, .. }
            | PipelineError::Reason { layer, .. }
            | PipelineError::Weigh { layer, .. }
            | PipelineError::UnknownDocument { layer, .. } => Some(*layer),
        }
    }

    /// The caller's input is at fault (as opposed to a backend).
    pub fn is_input_error(&self) -> bool {
        match self {
            PipelineError::InvalidQuery(_) | PipelineError::InvalidParams(_) => true,
            PipelineError::Embed { source, .. } => {
                matches!(source, EmbedError::EmptyText | EmbedError::ZeroVector)
            }
            _ => false,
        }
    }

    /// A remote backend could not be reached.
    pub fn is_unavailable(&self) -> bool {
        match self {
            PipelineError::Embed { source, .. } => source.is_unavailable(),
            PipelineError::Reason { source, .. } => {
                matches!(source, ReasonError::BackendUnavailable(_))
            }
            PipelineError::Weigh { source, .. } => {
                matches!(source, WeighError::RemoteUnavailable(_))
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchScope {
    TierFiltered,
    UnfilteredMerged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub scope: SearchScope,
    #[serde(default, skip_serializing_if = "SearchFilter::is_unfiltered")]
    pub filter: SearchFilter,
    pub k: usize,
    pub hits: Vec<RetrievalHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDepartment {
    pub department: String,
    pub confidence: f64,
    pub weight: Weight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub layer: Layer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub department: Option<String>,
    pub searches: Vec<SearchRecord>,
    /// Documents shown to the reasoner, in prompt order.
    pub context: Vec<RetrievalHit>,
    /// SHA-256 of the rendered prompt.
    pub prompt_digest: String,
    pub memory_in_prompt: bool,
    /// Root only: departments advanced to the department layer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub departments: Vec<RankedDepartment>,
    /// Item only: test ids dropped by redundancy elimination.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eliminated: Vec<String>,
    pub flags: Vec<Flag>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecommendation {
    pub test_id: String,
    pub name: String,
    pub department: String,
    pub weight: Weight,
    pub urgency: UrgencyLevel,
    pub rationale: String,
    pub supporting_doc_ids: Vec<DocumentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigUsed {
    #[serde(flatten)]
    pub ablation: AblationConfig,
    #[serde(flatten)]
    pub params: PipelineParams,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerTimings {
    pub root: f64,
    pub department: f64,
    pub item: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub recommendations: Vec<TestRecommendation>,
    pub trace: Vec<ReasoningStep>,
    pub memory_final: Vec<MemoryRecord>,
    pub config_used: ConfigUsed,
    pub elapsed_ms: LayerTimings,
}

/// Equality ignores `elapsed_ms`.
impl PartialEq for RecommendationResult {
    fn eq(&self, other: &Self) -> bool {
        self.recommendations == other.recommendations
            && self.trace == other.trace
            && self.memory_final == other.memory_final
            && self.config_used == other.config_used
    }
}

impl RecommendationResult {
    /// Union of all trace flags in vocabulary order.
    pub fn flags(&self) -> Vec<Flag> {
        let mut flags: Vec<Flag> = self.trace.iter().flat_map(|s| s.flags.iter().copied()).collect();
        normalize_flags(&mut flags);
        flags
    }

    pub fn clear_timings(&mut self) {
        self.elapsed_ms = LayerTimings::default();
    }

    /// Every document returned by any search of this run.
    pub fn retrieved_doc_ids(&self) -> BTreeSet<&DocumentId> {
        self.trace
            .iter()
            .flat_map(|s| &s.searches)
            .flat_map(|r| &r.hits)
            .map(|h| &h.doc_id)
            .collect()
    }

    pub fn layer_sequence(&self) -> Vec<Layer> {
        self.trace.iter().map(|s| s.layer).collect()
    }
}

pub fn prompt_digest(ctx: &ReasoningContext) -> String {
    hex::encode(Sha256::digest(render_prompt(ctx).as_bytes()))
}

struct DepartmentOutcome {
    department: String,
    search: SearchRecord,
    hits: Vec<ContextHit>,
    digest: String,
    memory_in_prompt: bool,
    output: ReasoningOutput,
}

#[derive(Clone)]
pub struct Engine {
    kb: Arc<KnowledgeBase>,
    index: Arc<VectorIndex>,
    embedder: Arc<dyn Embedder>,
    reasoner: Arc<dyn Reasoner>,
    weigher: Arc<dyn Weigher>,
}

impl Engine {
    pub fn new(
        kb: Arc<KnowledgeBase>,
        index: Arc<VectorIndex>,
        embedder: Arc<dyn Embedder>,
        reasoner: Arc<dyn Reasoner>,
        weigher: Arc<dyn Weigher>,
    ) -> Result<Self, EngineError> {
        if let Some(d) = embedder.dimension() {
            if d != index.dimension() {
                return Err(EngineError::DimensionMismatch {
                    embedder: d,
                    index: index.dimension(),
                });
            }
        }
        if let Some(e) = index.entries().iter().find(|e| kb.get(&e.doc_id).is_none()) {
            return Err(EngineError::UnknownDocument(e.doc_id.clone()));
        }
        let unindexed = kb.documents().filter(|d| index.get(d.id()).is_none()).count();
        if unindexed > 0 {
            tracing::warn!(unindexed, "knowledge-base documents missing from the index");
        }
        Ok(Self {
            kb,
            index,
            embedder,
            reasoner,
            weigher,
        })
    }

    /// Hashed embedder sized to the index, mock reasoner, heuristic weigher.
    pub fn local(kb: KnowledgeBase, index: VectorIndex) -> Result<Self, EngineError> {
        let embedder = HashedEmbedder::new(index.dimension())?;
        Self::new(
            Arc::new(kb),
            Arc::new(index),
            Arc::new(embedder),
            Arc::new(MockReasoner::default()),
            Arc::new(HeuristicWeigher),
        )
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    fn search(
        &self,
        layer: Layer,
        query: &EmbeddingVector,
        k: usize,
        filter: Option<SearchFilter>,
    ) -> Result<SearchRecord, PipelineError> {
        let (scope, filter) = match filter {
            Some(f) => (SearchScope::TierFiltered, f),
            None => (SearchScope::UnfilteredMerged, SearchFilter::default()),
        };
        let hits = self
            .index
            .search(query, k, Some(&filter))
            .map_err(|source| PipelineError::Search { layer, source })?;
        Ok(SearchRecord {
            scope,
            filter,
            k,
            hits,
        })
    }

    fn context_hits(&self, layer: Layer, hits: &[RetrievalHit]) -> Result<Vec<ContextHit>, PipelineError> {
        hits.iter()
            .map(|h| {
                let document = self.kb.get(&h.doc_id).ok_or_else(|| PipelineError::UnknownDocument {
                    layer,
                    doc_id: h.doc_id.clone(),
                })?;
                Ok(ContextHit {
                    hit: h.clone(),
                    document: document.clone(),
                })
            })
            .collect()
    }

    fn analyze(&self, ctx: &ReasoningContext) -> Result<(ReasoningOutput, String), PipelineError> {
        let digest = prompt_digest(ctx);
        let out = self.reasoner.analyze(ctx).map_err(|source| PipelineError::Reason {
            layer: ctx.layer,
            department: ctx.department.clone(),
            source,
        })?;
        Ok((out, digest))
    }

    fn weigh(&self, layer: Layer, reqs: &[ScoreRequest]) -> Result<Vec<Weight>, PipelineError> {
        self.weigher
            .score_batch(reqs)
            .map_err(|e| PipelineError::Weigh { layer, source: e.source })
    }

    /// Test ids of documents cited by department-layer memory records.
    fn claimed_tests<'a>(&'a self, memory: &'a Memory) -> BTreeSet<&'a str> {
        memory
            .records()
            .iter()
            .filter(|r| r.layer == Layer::Department)
            .flat_map(|r| &r.doc_ids)
            .filter_map(|id| self.kb.get(id).and_then(|d| d.test_id()))
            .collect()
    }

    fn department_step(
        &self,
        department: &str,
        query: &PatientQuery,
        query_vec: &EmbeddingVector,
        memory: &[MemoryRecord],
        config: &AblationConfig,
        params: &PipelineParams,
    ) -> Result<DepartmentOutcome, PipelineError> {
        let merged = !config.dual_kb_enabled;
        let filter = (!merged).then(|| SearchFilter::tier_and_department(Tier::Item, department));
        let search = self.search(Layer::Department, query_vec, params.dept_top_k, filter)?;
        let mut ctx = ReasoningContext::new(Layer::Department, query.clone());
        ctx.department = Some(department.to_string());
        ctx.hits = self.context_hits(Layer::Department, &search.hits)?;
        ctx.memory = memory.to_vec();
        ctx.merged_corpus = merged;
        let (mut output, digest) = self.analyze(&ctx)?;
        let known = ctx.hit_ids();
        // A test must be backed by a retrieved document carrying its id.
        output.tests.retain(|t| {
            let grounded = ctx.hits.iter().any(|h| h.document.test_id() == Some(t.test_id.as_str()));
            if !grounded {
                tracing::warn!(test_id = %t.test_id, department, "dropping test with no retrieved document");
            }
            grounded
        });
        for t in &mut output.tests {
            t.supporting_doc_ids.retain(|id| known.contains(id));
            if t.supporting_doc_ids.is_empty() {
                t.supporting_doc_ids = ctx
                    .hits
                    .iter()
                    .filter(|h| h.document.test_id() == Some(t.test_id.as_str()))
                    .map(|h| h.document.id().clone())
                    .collect();
            }
            if t.department.is_empty() {
                t.department = department.to_string();
            }
        }
        Ok(DepartmentOutcome {
            department: department.to_string(),
            search,
            memory_in_prompt: !ctx.memory.is_empty(),
            hits: ctx.hits,
            digest,
            output,
        })
    }

    pub fn recommend(
        &self,
        query: &PatientQuery,
        config: &AblationConfig,
        params: &PipelineParams,
    ) -> Result<RecommendationResult, PipelineError> {
        query.validate()?;
        params.validate()?;
        let merged = !config.dual_kb_enabled;
        let mut memory = Memory::new();
        let mut trace = Vec::new();
        let mut timings = LayerTimings::default();
        let snapshot = |m: &Memory| -> Vec<MemoryRecord> {
            if config.memory_enabled {
                m.records().to_vec()
            } else {
                Vec::new()
            }
        };

        // Root.
        let started = Instant::now();
        let query_vec = self
            .embedder
            .embed(&query.symptoms)
            .map_err(|source| PipelineError::Embed {
                layer: Layer::Root,
                source,
            })?;
        let root_filter = (!merged).then(|| SearchFilter::tier(Tier::Department));
        let root_search = self.search(Layer::Root, &query_vec, params.root_top_k, root_filter)?;
        let mut ctx = ReasoningContext::new(Layer::Root, query.clone());
        ctx.hits = self.context_hits(Layer::Root, &root_search.hits)?;
        ctx.memory = snapshot(&memory);
        ctx.merged_corpus = merged;
        let (root_out, root_digest) = self.analyze(&ctx)?;

        let reqs: Vec<ScoreRequest> = root_out
            .departments
            .iter()
            .map(|d| ScoreRequest {
                candidate: Candidate::Department(d.clone()),
                query: query.clone(),
                memory: snapshot(&memory),
            })
            .collect();
        let weights = self.weigh(Layer::Root, &reqs)?;
        let mut ranked: Vec<RankedDepartment> = root_out
            .departments
            .iter()
            .zip(weights)
            .filter(|(_, w)| w.value() > 0.0)
            .map(|(d, weight)| RankedDepartment {
                department: d.department.clone(),
                confidence: d.confidence,
                weight,
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.weight
                .value()
                .total_cmp(&a.weight.value())
                .then_with(|| a.department.cmp(&b.department))
        });
        let mut seen = HashSet::new();
        ranked.retain(|d| seen.insert(d.department.clone()));
        ranked.truncate(params.max_departments);

        let mut root_searches = vec![root_search];
        let mut fallback_hits = Vec::new();
        if !config.department_layer_enabled {
            let filter = (!merged).then(|| SearchFilter::tier(Tier::Item));
            let search = self.search(Layer::Root, &query_vec, params.root_top_k, filter)?;
            fallback_hits = self.context_hits(Layer::Root, &search.hits)?;
            root_searches.push(search);
        }
        if config.memory_enabled {
            memory.append(
                Layer::Root,
                None,
                root_out.summary.clone(),
                root_out.flags.clone(),
                ctx.hits.iter().map(|h| h.document.id().clone()).collect(),
            );
        }
        trace.push(ReasoningStep {
            layer: Layer::Root,
            department: None,
            searches: root_searches,
            context: ctx.hits.iter().map(|h| h.hit.clone()).collect(),
            prompt_digest: root_digest,
            memory_in_prompt: !ctx.memory.is_empty(),
            departments: ranked.clone(),
            eliminated: Vec::new(),
            flags: root_out.flags,
            summary: root_out.summary,
        });
        timings.root = elapsed_ms(started);

        // Department.
        let started = Instant::now();
        let mut pool: Vec<(TestCandidate, Vec<ContextHit>)> = Vec::new();
        let mut eliminated: Vec<String> = Vec::new();
        if config.department_layer_enabled {
            let mut names: Vec<&str> = ranked.iter().map(|d| d.department.as_str()).collect();
            names.sort_unstable();
            let dept_memory = snapshot(&memory);
            let outcomes: Vec<Result<DepartmentOutcome, PipelineError>> = names
                .par_iter()
                .map(|d| self.department_step(d, query, &query_vec, &dept_memory, config, params))
                .collect();
            for outcome in outcomes {
                let outcome = outcome?;
                {
                    let claimed = if config.memory_enabled {
                        self.claimed_tests(&memory)
                    } else {
                        BTreeSet::new()
                    };
                    for t in &outcome.output.tests {
                        if claimed.contains(t.test_id.as_str()) {
                            if !eliminated.contains(&t.test_id) {
                                eliminated.push(t.test_id.clone());
                            }
                        } else {
                            pool.push((t.clone(), outcome.hits.clone()));
                        }
                    }
                }
                if config.memory_enabled {
                    let mut cited: Vec<DocumentId> = Vec::new();
                    for id in outcome.output.tests.iter().flat_map(|t| &t.supporting_doc_ids) {
                        if !cited.contains(id) {
                            cited.push(id.clone());
                        }
                    }
                    memory.append(
                        Layer::Department,
                        Some(outcome.department.clone()),
                        outcome.output.summary.clone(),
                        outcome.output.flags.clone(),
                        cited,
                    );
                }
                trace.push(ReasoningStep {
                    layer: Layer::Department,
                    department: Some(outcome.department),
                    searches: vec![outcome.search],
                    context: outcome.hits.iter().map(|h| h.hit.clone()).collect(),
                    prompt_digest: outcome.digest,
                    memory_in_prompt: outcome.memory_in_prompt,
                    departments: Vec::new(),
                    eliminated: Vec::new(),
                    flags: outcome.output.flags,
                    summary: outcome.output.summary,
                });
            }
        }
        timings.department = elapsed_ms(started);

        // Item.
        let started = Instant::now();
        let (item_hits, allowed): (Vec<ContextHit>, BTreeSet<String>) = if config.department_layer_enabled {
            let mut hits: Vec<ContextHit> = Vec::new();
            for (t, dept_hits) in &pool {
                for id in &t.supporting_doc_ids {
                    if hits.iter().any(|h| h.document.id() == id) {
                        continue;
                    }
                    if let Some(h) = dept_hits.iter().find(|h| h.document.id() == id) {
                        hits.push(h.clone());
                    }
                }
            }
            hits.sort_by(|a, b| hit_order(a.hit.similarity, &a.hit.doc_id, b.hit.similarity, &b.hit.doc_id));
            (hits, pool.iter().map(|(t, _)| t.test_id.clone()).collect())
        } else {
            let allowed = fallback_hits
                .iter()
                .filter_map(|h| h.document.test_id().map(str::to_string))
                .collect();
            (fallback_hits, allowed)
        };
        let mut ctx = ReasoningContext::new(Layer::Item, query.clone());
        ctx.hits = item_hits;
        ctx.memory = snapshot(&memory);
        ctx.merged_corpus = merged;
        let (item_out, item_digest) = self.analyze(&ctx)?;

        let mut best: BTreeMap<String, TestCandidate> = BTreeMap::new();
        for mut t in item_out.tests.iter().cloned() {
            if !allowed.contains(&t.test_id) {
                tracing::warn!(test_id = %t.test_id, "item layer proposed a test outside the candidate pool");
                continue;
            }
            let in_context = |id: &DocumentId| ctx.hits.iter().any(|h| h.document.id() == id);
            t.supporting_doc_ids.retain(|id| in_context(id));
            if t.supporting_doc_ids.is_empty() {
                t.supporting_doc_ids = ctx
                    .hits
                    .iter()
                    .filter(|h| h.document.test_id() == Some(t.test_id.as_str()))
                    .map(|h| h.document.id().clone())
                    .collect();
            }
            if let Some(doc) = t.supporting_doc_ids.first().and_then(|id| self.kb.get(id)) {
                if t.name.trim().is_empty() {
                    t.name = doc.title().to_string();
                }
                if t.department.is_empty() {
                    t.department = doc.department().to_string();
                }
            }
            match best.get(&t.test_id) {
                Some(prev) if prev.confidence >= t.confidence => {}
                _ => {
                    best.insert(t.test_id.clone(), t);
                }
            }
        }
        let candidates: Vec<TestCandidate> = best.into_values().collect();
        let reqs: Vec<ScoreRequest> = candidates
            .iter()
            .map(|t| ScoreRequest {
                candidate: Candidate::Test(t.clone()),
                query: query.clone(),
                memory: snapshot(&memory),
            })
            .collect();
        let weights = self.weigh(Layer::Item, &reqs)?;
        let mut recommendations: Vec<TestRecommendation> = candidates
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| w.value() >= params.min_weight)
            .map(|(t, weight)| TestRecommendation {
                name: if t.name.trim().is_empty() { t.test_id.clone() } else { t.name },
                test_id: t.test_id,
                department: t.department,
                weight,
                urgency: t.urgency,
                rationale: t.rationale,
                supporting_doc_ids: t.supporting_doc_ids,
            })
            .collect();
        recommendations.sort_by(|a, b| {
            b.weight
                .value()
                .total_cmp(&a.weight.value())
                .then_with(|| a.test_id.cmp(&b.test_id))
        });
        recommendations.truncate(params.max_recommendations);

        let mut item_flags = item_out.flags.clone();
        if recommendations.is_empty() {
            item_flags.push(Flag::UncertainDiagnosis);
        }
        normalize_flags(&mut item_flags);
        if config.memory_enabled {
            let mut cited: Vec<DocumentId> = Vec::new();
            for id in recommendations.iter().flat_map(|r| &r.supporting_doc_ids) {
                if !cited.contains(id) {
                    cited.push(id.clone());
                }
            }
            memory.append(Layer::Item, None, item_out.summary.clone(), item_flags.clone(), cited);
        }
        trace.push(ReasoningStep {
            layer: Layer::Item,
            department: None,
            searches: Vec::new(),
            context: ctx.hits.iter().map(|h| h.hit.clone()).collect(),
            prompt_digest: item_digest,
            memory_in_prompt: !ctx.memory.is_empty(),
            departments: Vec::new(),
            eliminated,
            flags: item_flags,
            summary: item_out.summary,
        });
        timings.item = elapsed_ms(started);

        Ok(RecommendationResult {
            recommendations,
            trace,
            memory_final: memory.into_records(),
            config_used: ConfigUsed {
                ablation: *config,
                params: *params,
            },
            elapsed_ms: timings,
        })
    }
}

fn elapsed_ms(started: Instant) -> f64 {
    started.elapsed().as_secs_f64() * 1000.0
}
