use serde::{Deserialize, Serialize};

use crate::reason::{Flag, Layer};
use crate::types::DocumentId;

/// One reasoning-history entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub step: u32,
    pub layer: Layer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub department: Option<String>,
    pub summary: String,
    pub flags: Vec<Flag>,
    pub doc_ids: Vec<DocumentId>,
}

/// Append-only, per-query reasoning memory. Steps are assigned in append
/// order starting at 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Memory {
    records: Vec<MemoryRecord>,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(
        &mut self,
        layer: Layer,
        department: Option<String>,
        summary: impl Into<String>,
        flags: Vec<Flag>,
        doc_ids: Vec<DocumentId>,
    ) -> &MemoryRecord {
        let step = u32::try_from(self.records.len()).expect("memory step overflow");
        self.records.push(MemoryRecord {
            step,
            layer,
            department,
            summary: summary.into(),
            flags,
            doc_ids,
        });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<MemoryRecord> {
        self.records
    }
}
