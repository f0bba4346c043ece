//! Content-addressed media store.
//!
//! Layout: `<root>/<first two hex chars>/<asset_id>.<ext>` plus
//! `<root>/index.json`. Manifests refer to media by id only. Writes for one
//! asset id are serialized through a per-id lock; the provider behind a
//! cache miss is therefore called at most once per id.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaFormat {
    WavPcm16,
    Mp3,
    Png,
}

impl MediaFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MediaFormat::WavPcm16 => "wav",
            MediaFormat::Mp3 => "mp3",
            MediaFormat::Png => "png",
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            MediaFormat::WavPcm16 => "audio/wav",
            MediaFormat::Mp3 => "audio/mpeg",
            MediaFormat::Png => "image/png",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub format: MediaFormat,
    /// Zero for images.
    pub duration_ms: u64,
    pub bytes: u64,
    pub text: String,
}

/// Hex SHA-256 over length-prefixed parts.
pub fn content_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug)]
pub struct AssetStore {
    root: PathBuf,
    index: RwLock<BTreeMap<String, IndexEntry>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AssetStore {
    /// Opens (or creates) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let index_path = root.join("index.json");
        let index = if index_path.exists() {
            let raw = fs::read(&index_path)?;
            serde_json::from_slice(&raw).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?
        } else {
            BTreeMap::new()
        };
        Ok(Self { root, index: RwLock::new(index), locks: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, asset_id: &str, format: MediaFormat) -> PathBuf {
        let prefix = asset_id.get(..2).unwrap_or("00");
        self.root.join(prefix).join(format!("{asset_id}.{}", format.extension()))
    }

    pub fn entry(&self, asset_id: &str) -> Option<IndexEntry> {
        self.index.read().expect("index lock poisoned").get(asset_id).cloned()
    }

    pub fn contains(&self, asset_id: &str) -> bool {
        match self.entry(asset_id) {
            Some(e) => self.path_for(asset_id, e.format).exists(),
            None => false,
        }
    }

    pub fn read(&self, asset_id: &str) -> std::io::Result<Option<(IndexEntry, Vec<u8>)>> {
        let Some(entry) = self.entry(asset_id) else {
            return Ok(None);
        };
        let path = self.path_for(asset_id, entry.format);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some((entry, fs::read(path)?)))
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("index lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lock guarding the creation of one asset id.
    pub fn writer_lock(&self, asset_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table poisoned")
            .entry(asset_id.to_string())
            .or_default()
            .clone()
    }

    /// Writes media and records it in the index. Callers hold
    /// [`writer_lock`](Self::writer_lock) for `asset_id`.
    pub fn put(&self, asset_id: &str, entry: IndexEntry, media: &[u8]) -> std::io::Result<()> {
        let path = self.path_for(asset_id, entry.format);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&path, media)?;
        let mut index = self.index.write().expect("index lock poisoned");
        index.insert(asset_id.to_string(), entry);
        let raw = serde_json::to_vec_pretty(&*index).map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        write_atomic(&self.root.join("index.json"), &raw)
    }
}

pub(crate) fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
