//! Text-to-vector backends.
//!
//! [`HashedEmbedder`] is a signed hashed bag-of-words model: every token
//! from [`crate::text::tokenize`] is hashed with FNV-1a 64, lands in bucket
//! `hash % D` and contributes `+1`, or `-1` when bit 32 of the hash is set.
//! The accumulated vector is L2-normalised. The output depends only on the
//! input bytes, so it is identical across processes and platforms.
//!
//! [`RemoteEmbedder`] speaks the common embedding-endpoint shape:
//! `POST {"model": .., "input": [..]}` answered by
//! `{"data": [{"embedding": [..]}, ..]}`.

use std::hash::Hasher;
use std::sync::{Arc, OnceLock};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::remote::{JsonClient, RemoteEndpoint, RemoteError};
use crate::text::tokenize;
use crate::EmbeddingVector;

pub const DEFAULT_DIMENSION: usize = 256;
pub const MIN_DIMENSION: usize = 8;
pub const EMBED_API_KEY_ENV: &str = "HIREC_EMBED_API_KEY";
const REMOTE_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("text contains no tokens")]
    EmptyText,
    #[error("token contributions cancel to a zero vector")]
    ZeroVector,
    #[error("embedding endpoint unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("embedding endpoint returned a bad response: {0}")]
    RemoteBadResponse(String),
}

impl EmbedError {
    pub fn code(&self) -> &'static str {
        match self {
            EmbedError::EmptyText => "EMPTY_TEXT",
            EmbedError::ZeroVector => "ZERO_VECTOR",
            EmbedError::RemoteUnavailable(_) => "REMOTE_UNAVAILABLE",
            EmbedError::RemoteBadResponse(_) => "REMOTE_BAD_RESPONSE",
        }
    }

    pub fn is_unavailable(&self) -> bool {
        matches!(self, EmbedError::RemoteUnavailable(_))
    }
}

impl From<RemoteError> for EmbedError {
    fn from(e: RemoteError) -> Self {
        match e {
            RemoteError::Unavailable(m) => EmbedError::RemoteUnavailable(m),
            RemoteError::BadResponse(m) => EmbedError::RemoteBadResponse(m),
        }
    }
}

/// An [`EmbedError`] tagged with the position of the failing batch element.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("element {index}: {source}")]
pub struct BatchEmbedError {
    pub index: usize,
    #[source]
    pub source: EmbedError,
}

pub trait Embedder: Send + Sync {
    /// Output dimension, `None` while a remote dimension is still unknown.
    fn dimension(&self) -> Option<usize>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BatchEmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| self.embed(t).map_err(|source| BatchEmbedError { index, source }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedderConfigError {
    #[error("dimension {0} is below the minimum of {MIN_DIMENSION}")]
    DimensionTooSmall(usize),
    #[error("remote embedder requires `{0}`")]
    MissingRemoteField(&'static str),
    #[error("timeout_ms must be positive")]
    ZeroTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    LocalHashed,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dimension: usize,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::LocalHashed,
            dimension: DEFAULT_DIMENSION,
            endpoint_url: None,
            model_name: None,
            timeout_ms: crate::remote::DEFAULT_TIMEOUT_MS,
            max_in_flight: 4,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbedderConfigError> {
        if self.dimension < MIN_DIMENSION {
            return Err(EmbedderConfigError::DimensionTooSmall(self.dimension));
        }
        if self.timeout_ms == 0 {
            return Err(EmbedderConfigError::ZeroTimeout);
        }
        if self.kind == EmbedderKind::Remote {
            if self.endpoint_url.is_none() {
                return Err(EmbedderConfigError::MissingRemoteField("endpoint_url"));
            }
            if self.model_name.is_none() {
                return Err(EmbedderConfigError::MissingRemoteField("model_name"));
            }
        }
        Ok(())
    }

    /// Builds the configured backend. For the remote kind, a `None`
    /// `api_key` falls back to `HIREC_EMBED_API_KEY`.
    pub fn build(&self, api_key: Option<String>) -> Result<Arc<dyn Embedder>, EmbedderConfigError> {
        self.validate()?;
        Ok(match self.kind {
            EmbedderKind::LocalHashed => Arc::new(HashedEmbedder::new(self.dimension)?),
            EmbedderKind::Remote => {
                let key = api_key.or_else(|| std::env::var(EMBED_API_KEY_ENV).ok());
                let endpoint = RemoteEndpoint::new(self.endpoint_url.clone().unwrap_or_default())
                    .with_api_key(key)
                    .with_timeout_ms(self.timeout_ms)
                    .with_max_in_flight(self.max_in_flight);
                Arc::new(RemoteEmbedder::new(endpoint, self.model_name.clone().unwrap_or_default()))
            }
        })
    }
}

/// 64-bit FNV-1a over the token's UTF-8 bytes.
pub fn fnv1a64(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    h.finish()
}

/// Bucket and sign a token contributes to in a `dimension`-wide vector.
pub fn token_slot(token: &str, dimension: usize) -> (usize, f32) {
    let h = fnv1a64(token);
    let bucket = (h % dimension as u64) as usize;
    let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
    (bucket, sign)
}

#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dimension: usize,
}

impl HashedEmbedder {
    pub fn new(dimension: usize) -> Result<Self, EmbedderConfigError> {
        if dimension < MIN_DIMENSION {
            return Err(EmbedderConfigError::DimensionTooSmall(dimension));
        }
        Ok(Self { dimension })
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl Embedder for HashedEmbedder {
    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0.0f32; self.dimension];
        for t in &tokens {
            let (bucket, sign) = token_slot(t, self.dimension);
            acc[bucket] += sign;
        }
        EmbeddingVector::normalize(acc).map_err(|_| EmbedError::ZeroVector)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

/// Client for a remote embedding endpoint. The dimension is discovered
/// from the first response and enforced afterwards.
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    dimension: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: RemoteEndpoint, model: impl Into<String>) -> Self {
        Self {
            client: JsonClient::new(endpoint),
            model: model.into(),
            dimension: OnceLock::new(),
        }
    }

    pub fn endpoint(&self) -> &RemoteEndpoint {
        self.client.endpoint()
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp: EmbedResponse = self.client.post(&EmbedRequest {
            model: &self.model,
            input: texts,
        })?;
        if resp.data.len() != texts.len() {
            return Err(EmbedError::RemoteBadResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            )));
        }
        resp.data
            .into_iter()
            .map(|d| {
                let dim = *self.dimension.get_or_init(|| d.embedding.len());
                if d.embedding.len() != dim || dim == 0 {
                    return Err(EmbedError::RemoteBadResponse(format!(
                        "expected dimension {dim}, got {}",
                        d.embedding.len()
                    )));
                }
                EmbeddingVector::normalize(d.embedding)
                    .map_err(|e| EmbedError::RemoteBadResponse(e.to_string()))
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> Option<usize> {
        self.dimension.get().copied()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BatchEmbedError> {
        if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(BatchEmbedError {
                index,
                source: EmbedError::EmptyText,
            });
        }
        let mut out = Vec::with_capacity(texts.len());
        for (chunk_no, chunk) in texts.chunks(REMOTE_BATCH).enumerate() {
            let vectors = self.request(chunk).map_err(|source| BatchEmbedError {
                index: chunk_no * REMOTE_BATCH,
                source,
            })?;
            out.extend(vectors);
        }
        Ok(out)
    }
}
