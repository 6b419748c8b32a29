//! Exact cosine k-nearest-neighbour index.
//!
//! Vectors are unit-normalised on construction, so cosine similarity is a
//! plain dot product. Dot products accumulate in `f64` regardless of the
//! storage scalar, sequentially over components, which makes results
//! reproducible bit-for-bit across platforms.
//!
//! # Snapshot format (version 1)
//!
//! All integers little-endian.
//!
//! | offset | size | field                                            |
//! |--------|------|--------------------------------------------------|
//! | 0      | 4    | magic `HRVX`                                     |
//! | 4      | 4    | format version (`u32`, currently 1)              |
//! | 8      | 4    | scalar width in bytes (`u32`, 4 = f32, 8 = f64)  |
//! | 12     | 4    | dimension `D` (`u32`)                            |
//! | 16     | 8    | entry count `N` (`u64`)                          |
//! | 24     | 4    | id field width `W_id` (`u32`)                    |
//! | 28     | 4    | department field width `W_dep` (`u32`)           |
//! | 32     | ...  | `N` fixed-width records                          |
//! | end-4  | 4    | CRC32 (IEEE) of every preceding byte             |
//!
//! Each record is `tier: u8` (0 = department, 1 = item), `id_len: u32`,
//! `id` UTF-8 zero-padded to `W_id`, `dep_len: u32`, `department` UTF-8
//! zero-padded to `W_dep`, then `D` scalars. Records appear in insertion
//! order, so saving an unchanged index twice yields identical bytes.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::{DocumentId, Tier};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"HRVX";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;
const CRC_LEN: usize = 4;

/// Allowed deviation of a stored vector's L2 norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VecStoreError {
    #[error("document `{0}` is already indexed")]
    DuplicateId(DocumentId),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot normalise a zero vector")]
    ZeroVector,
    #[error("vector contains non-finite components")]
    NonFinite,
    #[error("vector norm {0} is not within tolerance of 1")]
    NotUnitNorm(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("snapshot stores {found}-byte scalars, index expects {expected}")]
    ScalarWidthMismatch { found: usize, expected: usize },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

impl VecStoreError {
    pub fn code(&self) -> &'static str {
        match self {
            VecStoreError::DuplicateId(_) => "DUPLICATE_ID",
            VecStoreError::DimensionMismatch { .. } | VecStoreError::ScalarWidthMismatch { .. } => {
                "DIMENSION_MISMATCH"
            }
            VecStoreError::ZeroVector | VecStoreError::NonFinite | VecStoreError::NotUnitNorm(_) => {
                "INVALID_VECTOR"
            }
            VecStoreError::InvalidK => "INVALID_K",
            VecStoreError::Io(_) => "IO_ERROR",
            VecStoreError::FormatVersionMismatch { .. } => "FORMAT_VERSION_MISMATCH",
            VecStoreError::CorruptSnapshot(_) => "CORRUPT_SNAPSHOT",
        }
    }
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<S> {
    values: Vec<S>,
}

impl<S: Scalar> Embedding<S> {
    /// L2-normalises `values`. The norm is computed in `f64`.
    pub fn normalize(values: Vec<S>) -> Result<Self, VecStoreError> {
        let mut sq = 0.0f64;
        for v in &values {
            let v = v.to_f64_lossless();
            if !v.is_finite() {
                return Err(VecStoreError::NonFinite);
            }
            sq += v * v;
        }
        let norm = sq.sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(VecStoreError::ZeroVector);
        }
        let values = values
            .into_iter()
            .map(|v| S::from_f64_lossy(v.to_f64_lossless() / norm))
            .collect();
        Ok(Self { values })
    }

    /// Accepts an already-normalised vector, rejecting anything whose
    /// norm is further than [`UNIT_NORM_TOLERANCE`] from 1.
    pub fn from_unit(values: Vec<S>) -> Result<Self, VecStoreError> {
        let norm = l2_norm(&values);
        if !norm.is_finite() {
            return Err(VecStoreError::NonFinite);
        }
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(VecStoreError::NotUnitNorm(norm));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// Cosine similarity with another unit vector of the same dimension.
    pub fn dot(&self, other: &Self) -> f64 {
        dot_f64(&self.values, &other.values)
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }
}

fn l2_norm<S: Scalar>(values: &[S]) -> f64 {
    values
        .iter()
        .map(|v| {
            let v = v.to_f64_lossless();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

fn dot_f64<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += x.to_f64_lossless() * y.to_f64_lossless();
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry<S> {
    pub doc_id: DocumentId,
    pub vector: Embedding<S>,
    pub tier: Tier,
    pub department: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub doc_id: DocumentId,
    pub similarity: f64,
}

/// Restriction on `(tier, department)`; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchFilter {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub department: Option<String>,
}

impl SearchFilter {
    pub fn tier(tier: Tier) -> Self {
        Self {
            tier: Some(tier),
            department: None,
        }
    }

    pub fn tier_and_department(tier: Tier, department: impl Into<String>) -> Self {
        Self {
            tier: Some(tier),
            department: Some(department.into()),
        }
    }

    pub fn is_unfiltered(&self) -> bool {
        self.tier.is_none() && self.department.is_none()
    }

    pub fn matches(&self, tier: Tier, department: &str) -> bool {
        self.tier.is_none_or(|t| t == tier)
            && self.department.as_deref().is_none_or(|d| d == department)
    }
}

/// Hit ordering: similarity descending, then doc id ascending.
pub fn hit_order(a_sim: f64, a_id: &DocumentId, b_sim: f64, b_id: &DocumentId) -> Ordering {
    b_sim.total_cmp(&a_sim).then_with(|| a_id.cmp(b_id))
}

/// Brute-force flat index.
#[derive(Debug, Clone)]
pub struct FlatIndex<S> {
    dimension: usize,
    entries: Vec<IndexEntry<S>>,
    positions: HashMap<DocumentId, usize>,
}

impl<S: Scalar> FlatIndex<S> {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry<S>] {
        &self.entries
    }

    pub fn get(&self, id: &DocumentId) -> Option<&IndexEntry<S>> {
        self.positions.get(id).map(|&i| &self.entries[i])
    }

    pub fn add(&mut self, entry: IndexEntry<S>) -> Result<(), VecStoreError> {
        if entry.vector.dim() != self.dimension {
            return Err(VecStoreError::DimensionMismatch {
                expected: self.dimension,
                found: entry.vector.dim(),
            });
        }
        if self.positions.contains_key(&entry.doc_id) {
            return Err(VecStoreError::DuplicateId(entry.doc_id));
        }
        self.positions.insert(entry.doc_id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn search(
        &self,
        query: &Embedding<S>,
        k: usize,
        filter: Option<&SearchFilter>,
    ) -> Result<Vec<RetrievalHit>, VecStoreError> {
        self.search_by(query, k, |tier, dep| {
            filter.is_none_or(|f| f.matches(tier, dep))
        })
    }

    /// Search with an arbitrary predicate on `(tier, department)`.
    pub fn search_by<F>(
        &self,
        query: &Embedding<S>,
        k: usize,
        predicate: F,
    ) -> Result<Vec<RetrievalHit>, VecStoreError>
    where
        F: Fn(Tier, &str) -> bool,
    {
        if query.dim() != self.dimension {
            return Err(VecStoreError::DimensionMismatch {
                expected: self.dimension,
                found: query.dim(),
            });
        }
        if k == 0 {
            return Err(VecStoreError::InvalidK);
        }
        let mut scored: Vec<(f64, &DocumentId)> = self
            .entries
            .iter()
            .filter(|e| predicate(e.tier, &e.department))
            .map(|e| (query.dot(&e.vector), &e.doc_id))
            .collect();
        let cmp = |a: &(f64, &DocumentId), b: &(f64, &DocumentId)| hit_order(a.0, a.1, b.0, b.1);
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(similarity, id)| RetrievalHit {
                doc_id: id.clone(),
                similarity,
            })
            .collect())
    }

    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let id_width = self.entries.iter().map(|e| e.doc_id.as_str().len()).max().unwrap_or(0);
        let dep_width = self.entries.iter().map(|e| e.department.len()).max().unwrap_or(0);
        let record_len = record_len::<S>(self.dimension, id_width, dep_width);
        let mut out = Vec::with_capacity(HEADER_LEN + record_len * self.entries.len() + CRC_LEN);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(S::WIDTH as u32).to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        out.extend_from_slice(&(id_width as u32).to_le_bytes());
        out.extend_from_slice(&(dep_width as u32).to_le_bytes());
        for e in &self.entries {
            out.push(e.tier.to_byte());
            write_padded(&mut out, e.doc_id.as_str().as_bytes(), id_width);
            write_padded(&mut out, e.department.as_bytes(), dep_width);
            for v in e.vector.values() {
                v.write_le(&mut out);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self, VecStoreError> {
        let corrupt = |msg: &str| VecStoreError::CorruptSnapshot(msg.to_string());
        if bytes.len() < HEADER_LEN + CRC_LEN {
            return Err(corrupt("file shorter than header"));
        }
        let (payload, trailer) = bytes.split_at(bytes.len() - CRC_LEN);
        let stored = u32::from_le_bytes(trailer.try_into().expect("crc width"));
        if crc32fast::hash(payload) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        if &payload[0..4] != SNAPSHOT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(payload, 4);
        if version != SNAPSHOT_VERSION {
            return Err(VecStoreError::FormatVersionMismatch {
                found: version,
                expected: SNAPSHOT_VERSION,
            });
        }
        let width = read_u32(payload, 8) as usize;
        if width != S::WIDTH {
            return Err(VecStoreError::ScalarWidthMismatch {
                found: width,
                expected: S::WIDTH,
            });
        }
        let dimension = read_u32(payload, 12) as usize;
        let count = u64::from_le_bytes(payload[16..24].try_into().expect("u64 width"));
        let id_width = read_u32(payload, 24) as usize;
        let dep_width = read_u32(payload, 28) as usize;
        let record_len = record_len::<S>(dimension, id_width, dep_width);
        let expected_len = usize::try_from(count)
            .ok()
            .and_then(|n| n.checked_mul(record_len))
            .and_then(|n| n.checked_add(HEADER_LEN));
        if expected_len != Some(payload.len()) {
            return Err(corrupt("record section length does not match header"));
        }

        let mut index = Self::new(dimension);
        for record in payload[HEADER_LEN..].chunks_exact(record_len) {
            let tier = Tier::from_byte(record[0]).ok_or_else(|| corrupt("unknown tier byte"))?;
            let mut at = 1;
            let id = read_padded(record, &mut at, id_width).ok_or_else(|| corrupt("bad id field"))?;
            let department =
                read_padded(record, &mut at, dep_width).ok_or_else(|| corrupt("bad department field"))?;
            let values: Vec<S> = record[at..]
                .chunks_exact(S::WIDTH)
                .map(S::read_le)
                .collect();
            let doc_id = DocumentId::new(id).map_err(|_| corrupt("empty document id"))?;
            let vector = Embedding::from_unit(values).map_err(|e| corrupt(&e.to_string()))?;
            index
                .add(IndexEntry {
                    doc_id,
                    vector,
                    tier,
                    department,
                })
                .map_err(|e| corrupt(&e.to_string()))?;
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VecStoreError> {
        fs::write(path, self.to_snapshot_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VecStoreError> {
        let bytes = fs::read(path)?;
        Self::from_snapshot_bytes(&bytes)
    }
}

fn record_len<S: Scalar>(dimension: usize, id_width: usize, dep_width: usize) -> usize {
    1 + 4 + id_width + 4 + dep_width + dimension * S::WIDTH
}

fn read_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().expect("u32 width"))
}

fn write_padded(out: &mut Vec<u8>, bytes: &[u8], width: usize) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
    out.resize(out.len() + (width - bytes.len()), 0);
}

fn read_padded(record: &[u8], at: &mut usize, width: usize) -> Option<String> {
    let len = read_u32(record, *at) as usize;
    *at += 4;
    if len > width {
        return None;
    }
    let field = &record[*at..*at + width];
    *at += width;
    if field[len..].iter().any(|&b| b != 0) {
        return None;
    }
    String::from_utf8(field[..len].to_vec()).ok()
}
