//! Content-addressed on-disk cache for service responses.
//!
//! Keys are SHA-256 digests of the request. Readers never block; writers of
//! the same key are serialized and publish through an atomic rename, so a
//! reader sees either nothing or a complete entry.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

/// Hex SHA-256 over length-prefixed parts, so ("ab","c") and ("a","bc") differ.
pub fn cache_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug)]
pub struct BlobCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl BlobCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(BlobCache { dir, locks: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    pub fn get(&self, key: &str) -> Option<Vec<u8>> {
        fs::read(self.path(key)).ok()
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(key.to_string()).or_default().clone()
    }

    pub fn put(&self, key: &str, bytes: &[u8]) -> std::io::Result<()> {
        let lock = self.key_lock(key);
        let _guard = lock.lock().unwrap();
        self.write_atomic(key, bytes)
    }

    fn write_atomic(&self, key: &str, bytes: &[u8]) -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path(key)).map_err(|e| e.error)?;
        Ok(())
    }

    /// Returns the cached value or computes, stores and returns it. Concurrent
    /// callers with the same key compute at most once.
    pub fn get_or_insert_with<E>(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<Vec<u8>, E>,
    ) -> Result<Vec<u8>, E>
    where
        E: From<std::io::Error>,
    {
        if let Some(hit) = self.get(key) {
            return Ok(hit);
        }
        let lock = self.key_lock(key);
        let _guard = lock.lock().unwrap();
        if let Some(hit) = self.get(key) {
            return Ok(hit);
        }
        let bytes = compute()?;
        self.write_atomic(key, &bytes)?;
        Ok(bytes)
    }
}
