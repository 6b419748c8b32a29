//! Hierarchical retrieval-augmented recommendation of diagnostic tests.
//!
//! A query flows through three layers: root routing over department-level
//! knowledge, department-specific reasoning over item-level knowledge, and
//! a final item consolidation that weighs, deduplicates and ranks tests.
//! Embedding, reasoning and weighting are pluggable backends with
//! deterministic local implementations.

pub mod embed;
pub mod eval;
pub mod kb;
pub mod pipeline;
pub mod reason;
pub mod scalar;
pub mod text;
pub mod types;
pub mod vecstore;
pub mod weigh;

mod remote;

pub use remote::{RemoteEndpoint, RemoteError};
pub use scalar::Scalar;
pub use types::{
    AblationConfig, Document, DocumentId, PatientQuery, PipelineParams, Sex, Tier, UrgencyLevel,
};

/// Unit-norm 32-bit embedding.
pub type EmbeddingVector = vecstore::Embedding<f32>;
/// Set metrics in double precision.
pub type Metrics = eval::SetMetrics<f64>;
/// Exact cosine index over 32-bit embeddings.
pub type VectorIndex = vecstore::FlatIndex<f32>;
