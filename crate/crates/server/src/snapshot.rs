//! Immutable dataset snapshots, their manifest, and the per-snapshot response
//! cache.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use substrace::dataset::{Dataset, DAILY_STATS_FILE, PROJECTS_FILE, SOCIAL_FILE, TRANSFERS_FILE};
use substrace::model::TimeWindow;

use crate::analysis::{run_analysis, ValidRequest};
use crate::error::ApiError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_CACHE_CAPACITY: usize = 64;
const DATA_FILES: [&str; 4] = [PROJECTS_FILE, TRANSFERS_FILE, DAILY_STATS_FILE, SOCIAL_FILE];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    /// Data rows, header excluded.
    pub rows: usize,
    pub sha256: String,
}

/// What `substrace ingest` writes next to the data files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<FileEntry>,
    pub projects: usize,
    pub wallets: usize,
    pub span: Option<TimeWindow>,
    /// Transfers the balance replay could not reconcile.
    pub replay_anomalies: usize,
}

impl Manifest {
    /// Digests the files in `dir` and summarizes the loaded dataset.
    pub fn build(dir: &Path, dataset: &Dataset) -> Result<Self, ApiError> {
        let mut files = Vec::new();
        for name in DATA_FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(|e| ApiError::DataError(format!("{}: {e}", path.display())))?;
            let rows = match name {
                PROJECTS_FILE => dataset.projects().len(),
                TRANSFERS_FILE => dataset.transfers().len(),
                DAILY_STATS_FILE => dataset.daily_stats().len(),
                _ => dataset.social().len(),
            };
            files.push(FileEntry {
                name: name.to_string(),
                rows,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        Ok(Self {
            files,
            projects: dataset.projects().len(),
            wallets: dataset.roles().wallets().len(),
            span: dataset.span(),
            replay_anomalies: dataset.roles().anomalies().len(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ApiError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| ApiError::DataError(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Option<Self>, ApiError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| ApiError::DataError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| ApiError::DataError(format!("{}: {e}", path.display())))
    }
}

/// Bounded LRU map from request digest to a serialized response body.
#[derive(Debug)]
pub struct ResponseCache {
    capacity: usize,
    entries: Mutex<IndexMap<[u8; 32], Arc<Vec<u8>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ResponseCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: Mutex::new(IndexMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn get(&self, key: &[u8; 32]) -> Option<Arc<Vec<u8>>> {
        let mut map = self.entries.lock().expect("cache lock");
        match map.get_index_of(key) {
            Some(i) => {
                let last = map.len() - 1;
                map.move_index(i, last);
                self.hits.fetch_add(1, Ordering::Relaxed);
                map.get_index(last).map(|(_, v)| v.clone())
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn insert(&self, key: [u8; 32], body: Arc<Vec<u8>>) {
        let mut map = self.entries.lock().expect("cache lock");
        map.shift_remove(&key);
        while map.len() >= self.capacity {
            map.shift_remove_index(0);
        }
        map.insert(key, body);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &[u8; 32]) -> bool {
        self.entries.lock().expect("cache lock").contains_key(key)
    }

    /// `(hits, misses)` since creation.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}

/// A loaded dataset and the analysis bodies computed from it.
#[derive(Debug)]
pub struct Snapshot {
    pub dataset: Dataset,
    pub manifest: Option<Manifest>,
    pub source: Option<PathBuf>,
    cache: ResponseCache,
}

impl Snapshot {
    pub fn new(dataset: Dataset) -> Self {
        Self {
            dataset,
            manifest: None,
            source: None,
            cache: ResponseCache::new(DEFAULT_CACHE_CAPACITY),
        }
    }

    /// Loads a data directory. When a manifest is present the file digests
    /// must still match it.
    pub fn load(dir: &Path) -> Result<Self, ApiError> {
        if !dir.join(PROJECTS_FILE).exists() {
            return Err(ApiError::ServiceNotReady);
        }
        let dataset = Dataset::load(dir)?;
        let current = Manifest::build(dir, &dataset)?;
        if let Some(stored) = Manifest::read(dir)? {
            if stored.files != current.files {
                return Err(ApiError::DataError(format!(
                    "{} does not match the data files; run `substrace ingest` again",
                    dir.join(MANIFEST_FILE).display()
                )));
            }
        }
        Ok(Self {
            dataset,
            manifest: Some(current),
            source: Some(dir.to_path_buf()),
            cache: ResponseCache::new(DEFAULT_CACHE_CAPACITY),
        })
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// The serialized analysis response, from cache when possible. The key
    /// is the digest of the request with its window resolved.
    pub fn analysis_body(&self, request: &ValidRequest) -> Result<Arc<Vec<u8>>, ApiError> {
        let resolved = request.resolved(&self.dataset)?;
        let key = resolved.digest();
        if let Some(body) = self.cache.get(&key) {
            return Ok(body);
        }
        let response = run_analysis(&self.dataset, &resolved)?;
        let body = Arc::new(serde_json::to_vec(&response).map_err(|e| ApiError::Internal(e.to_string()))?);
        self.cache.insert(key, body.clone());
        Ok(body)
    }
}

/// The current snapshot. Readers clone the `Arc`; replacement swaps it whole.
#[derive(Debug, Default)]
pub struct SnapshotStore {
    current: RwLock<Option<Arc<Snapshot>>>,
}

impl SnapshotStore {
    pub fn new(snapshot: Option<Snapshot>) -> Self {
        Self {
            current: RwLock::new(snapshot.map(Arc::new)),
        }
    }

    pub fn get(&self) -> Result<Arc<Snapshot>, ApiError> {
        self.current
            .read()
            .expect("snapshot lock")
            .clone()
            .ok_or(ApiError::ServiceNotReady)
    }

    /// Installs a new snapshot and returns the previous one.
    pub fn replace(&self, snapshot: Snapshot) -> Option<Arc<Snapshot>> {
        self.current.write().expect("snapshot lock").replace(Arc::new(snapshot))
    }
}
