//! Document repository behind a storage abstraction, with snapshot-based
//! replica synchronization.
//!
//! Conflict resolution is last-writer-wins on the `(updated_at, origin)`
//! key. Wall clocks are assumed roughly synchronized between nodes; skew
//! bounds the window in which an older write can shadow a newer one.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// One stored document version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub id: String,
    pub body: Value,
    /// Monotonically increasing per id per writing node, starting at 1.
    pub version: u64,
    /// Microseconds since the Unix epoch; never decreases across versions
    /// of the same id on one node.
    pub updated_at: i64,
    /// Node that produced this version.
    pub origin: String,
}

impl StoredDocument {
    /// The LWW ordering key.
    fn lww_key(&self) -> (i64, &str) {
        (self.updated_at, self.origin.as_str())
    }
}

/// A consistent point-in-time bundle: every id's newest local version,
/// exactly once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncBundle {
    pub node: String,
    pub created_at: i64,
    pub entries: Vec<StoredDocument>,
}

/// Outcome counts of a bundle merge.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub applied: u64,
    pub skipped: u64,
    pub conflicts_resolved: u64,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("document id must be non-empty")]
    InvalidId,
    #[error("document {0:?} not found")]
    NotFound(String),
    #[error("malformed sync bundle: {0}")]
    MalformedBundle(String),
    #[error("storage backend: {0}")]
    Backend(String),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::InvalidId => "invalid_id",
            StoreError::NotFound(_) => "not_found",
            StoreError::MalformedBundle(_) => "malformed_bundle",
            StoreError::Backend(_) => "backend",
        }
    }
}

/// Minimal storage interface: put/get/delete/scan. Implementations must make
/// `scan` a point-in-time view of everything written so far.
pub trait StorageBackend: Send + Sync {
    fn put(&mut self, doc: &StoredDocument) -> Result<(), StoreError>;
    fn get(&self, id: &str) -> Result<Option<StoredDocument>, StoreError>;
    fn delete(&mut self, id: &str) -> Result<(), StoreError>;
    fn scan(&self) -> Result<Vec<StoredDocument>, StoreError>;
}

/// Volatile in-memory binding.
#[derive(Debug, Default)]
pub struct MemoryBackend {
    docs: BTreeMap<String, StoredDocument>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StorageBackend for MemoryBackend {
    fn put(&mut self, doc: &StoredDocument) -> Result<(), StoreError> {
        self.docs.insert(doc.id.clone(), doc.clone());
        Ok(())
    }

    fn get(&self, id: &str) -> Result<Option<StoredDocument>, StoreError> {
        Ok(self.docs.get(id).cloned())
    }

    fn delete(&mut self, id: &str) -> Result<(), StoreError> {
        self.docs.remove(id);
        Ok(())
    }

    fn scan(&self) -> Result<Vec<StoredDocument>, StoreError> {
        Ok(self.docs.values().cloned().collect())
    }
}

/// Journal record: one write, as stored on disk.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum JournalRecord {
    Put { doc: StoredDocument },
    Delete { id: String },
}

/// Append-only file journal with periodic compaction.
///
/// File format: repeated records, each a 4-byte big-endian length prefix
/// followed by that many bytes of canonical attribute-value encoding.
pub struct JournalBackend {
    path: PathBuf,
    file: std::fs::File,
    docs: BTreeMap<String, StoredDocument>,
    records: usize,
}

impl JournalBackend {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut docs = BTreeMap::new();
        let mut records = 0usize;
        if path.exists() {
            let bytes = std::fs::read(&path).map_err(|e| StoreError::Backend(e.to_string()))?;
            let mut at = 0usize;
            while at + 4 <= bytes.len() {
                let len = u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
                    as usize;
                at += 4;
                if at + len > bytes.len() {
                    return Err(StoreError::Backend(format!(
                        "truncated journal record at byte {at}"
                    )));
                }
                let record: JournalRecord = serde_json::from_slice(&bytes[at..at + len])
                    .map_err(|e| StoreError::Backend(format!("corrupt journal record: {e}")))?;
                at += len;
                records += 1;
                match record {
                    JournalRecord::Put { doc } => {
                        docs.insert(doc.id.clone(), doc);
                    }
                    JournalRecord::Delete { id } => {
                        docs.remove(&id);
                    }
                }
            }
            if at != bytes.len() {
                return Err(StoreError::Backend(format!(
                    "trailing garbage after byte {at}"
                )));
            }
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::Backend(e.to_string()))?;
        Ok(JournalBackend {
            path,
            file,
            docs,
            records,
        })
    }

    fn append(&mut self, record: &JournalRecord) -> Result<(), StoreError> {
        let value = serde_json::to_value(record).expect("record serializes");
        let bytes = serde_json::to_vec(&value).expect("canonical record serializes");
        let len = u32::try_from(bytes.len())
            .map_err(|_| StoreError::Backend("record too large".to_string()))?;
        self.file
            .write_all(&len.to_be_bytes())
            .and_then(|_| self.file.write_all(&bytes))
            .and_then(|_| self.file.flush())
            .map_err(|e| StoreError::Backend(e.to_string()))?;
        self.records += 1;
        self.maybe_compact()
    }

    /// Rewrite the journal with only live documents once dead records
    /// dominate the file.
    fn maybe_compact(&mut self) -> Result<(), StoreError> {
        if self.records < 64 || self.records < self.docs.len() * 4 {
            return Ok(());
        }
        self.compact()
    }

    pub fn compact(&mut self) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("compact");
        {
            let mut out = std::fs::File::create(&tmp)
                .map_err(|e| StoreError::Backend(e.to_string()))?;
            for doc in self.docs.values() {
                let record = JournalRecord::Put { doc: doc.clone() };
                let value = serde_json::to_value(&record).expect("record serializes");
                let bytes = serde_json::to_vec(&value).expect("canonical record serializes");
                out.write_all(&(bytes.len() as u32).to_be_bytes())
                    .and_then(|_| out.write_all(&bytes))
                    .map_err(|e| StoreError::Backend(e.to_string()))?;
            }
            out.flush().map_err(|e| StoreError::Backend(e.to_string()))?;
        }
        std::fs::rename(&tmp, &self.path).map_err(|e| StoreError::Backend(e.to_string()))?;
        self.file = std::fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| StoreError::Backend(e.to_string()))?;
        self.records = self.docs.len();
        Ok(())
    }
}

impl StorageBackend for JournalBackend {
    fn put(&mut self, doc: &StoredDocument) -> Result<(), StoreError> {
        self.append(&JournalRecord::Put { doc: doc.clone() })?;
        self.docs.insert(doc.id.clone(), doc.clone());
        Ok(())
    }

    fn get(&self, id: &str) -> Result<Option<StoredDocument>, StoreError> {
        Ok(self.docs.get(id).cloned())
    }

    fn delete(&mut self, id: &str) -> Result<(), StoreError> {
        self.append(&JournalRecord::Delete { id: id.to_string() })?;
        self.docs.remove(id);
        Ok(())
    }

    fn scan(&self) -> Result<Vec<StoredDocument>, StoreError> {
        Ok(self.docs.values().cloned().collect())
    }
}

fn now_micros() -> i64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as i64)
        .unwrap_or(0)
}

/// The document repository of one node.
pub struct Store {
    node_id: String,
    backend: RwLock<Box<dyn StorageBackend>>,
}

impl Store {
    pub fn new(node_id: impl Into<String>, backend: Box<dyn StorageBackend>) -> Self {
        Store {
            node_id: node_id.into(),
            backend: RwLock::new(backend),
        }
    }

    pub fn in_memory(node_id: impl Into<String>) -> Self {
        Self::new(node_id, Box::new(MemoryBackend::new()))
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    /// Store a new version of `id`: version = previous + 1 (or 1),
    /// updated_at = now (bumped to stay strictly increasing), origin = this
    /// node.
    pub fn put_document(&self, id: &str, body: Value) -> Result<StoredDocument, StoreError> {
        if id.is_empty() {
            return Err(StoreError::InvalidId);
        }
        let mut backend = self.backend.write().expect("store lock");
        let previous = backend.get(id)?;
        let (version, floor) = match &previous {
            Some(doc) => (doc.version + 1, doc.updated_at + 1),
            None => (1, i64::MIN),
        };
        let doc = StoredDocument {
            id: id.to_string(),
            body,
            version,
            updated_at: now_micros().max(floor),
            origin: self.node_id.clone(),
        };
        backend.put(&doc)?;
        Ok(doc)
    }

    pub fn get_document(&self, id: &str) -> Result<StoredDocument, StoreError> {
        self.backend
            .read()
            .expect("store lock")
            .get(id)?
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Remove a document locally. Deletion does not propagate through sync
    /// bundles.
    pub fn delete_document(&self, id: &str) -> Result<(), StoreError> {
        let mut backend = self.backend.write().expect("store lock");
        if backend.get(id)?.is_none() {
            return Err(StoreError::NotFound(id.to_string()));
        }
        backend.delete(id)
    }

    pub fn list_ids(&self) -> Result<Vec<String>, StoreError> {
        Ok(self
            .backend
            .read()
            .expect("store lock")
            .scan()?
            .into_iter()
            .map(|d| d.id)
            .collect())
    }

    /// Export the newest local version of every id, exactly once.
    pub fn snapshot_export(&self) -> Result<SyncBundle, StoreError> {
        let entries = self.backend.read().expect("store lock").scan()?;
        Ok(SyncBundle {
            node: self.node_id.clone(),
            created_at: now_micros(),
            entries,
        })
    }

    /// Merge a bundle: an entry applies iff the id is absent locally or the
    /// entry's `(updated_at, origin)` is greater than the local one.
    /// Idempotent, and order-insensitive over a fixed set of versions.
    pub fn sync_merge(&self, bundle: &SyncBundle) -> Result<MergeReport, StoreError> {
        let mut seen = std::collections::HashSet::new();
        for entry in &bundle.entries {
            if entry.id.is_empty() {
                return Err(StoreError::MalformedBundle(
                    "entry with empty id".to_string(),
                ));
            }
            if !seen.insert(entry.id.as_str()) {
                return Err(StoreError::MalformedBundle(format!(
                    "duplicate entry for id {:?}",
                    entry.id
                )));
            }
            if entry.version == 0 {
                return Err(StoreError::MalformedBundle(format!(
                    "entry {:?} has version 0",
                    entry.id
                )));
            }
        }

        let mut report = MergeReport::default();
        let mut backend = self.backend.write().expect("store lock");
        for entry in &bundle.entries {
            match backend.get(&entry.id)? {
                None => {
                    backend.put(entry)?;
                    report.applied += 1;
                }
                Some(local) => {
                    if entry.lww_key() > local.lww_key() {
                        backend.put(entry)?;
                        report.applied += 1;
                        report.conflicts_resolved += 1;
                    } else {
                        report.skipped += 1;
                    }
                }
            }
        }
        Ok(report)
    }

    /// Canonical encoding of the full document map; byte-identical across
    /// converged replicas.
    pub fn canonical_snapshot(&self) -> Result<Vec<u8>, StoreError> {
        let docs = self.backend.read().expect("store lock").scan()?;
        let map: BTreeMap<String, Value> = docs
            .into_iter()
            .map(|d| {
                let id = d.id.clone();
                (id, serde_json::to_value(d).expect("document serializes"))
            })
            .collect();
        Ok(serde_json::to_vec(&map).expect("canonical snapshot serializes"))
    }
}
