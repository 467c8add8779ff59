//! Event and background clip catalogs: a directory of WAV files plus a
//! `catalog.jsonl` of `{"id", "path", "tags"}` records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{resample, wav, AudioError, Waveform};
use crate::SAMPLE_RATE;

pub const CATALOG_FILE: &str = "catalog.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    /// Relative to the catalog directory.
    pub path: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    dir: PathBuf,
    entries: BTreeMap<String, CatalogEntry>,
}

impl Catalog {
    pub fn load(dir: &Path) -> Result<Self, AudioError> {
        let text = fs::read_to_string(dir.join(CATALOG_FILE))?;
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CatalogEntry = serde_json::from_str(line)
                .map_err(|e| AudioError::Wav(format!("{}:{}: {e}", CATALOG_FILE, n + 1)))?;
            entries.insert(entry.id.clone(), entry);
        }
        Ok(Catalog { dir: dir.to_path_buf(), entries })
    }

    /// Writes clips and the index; used to build fixtures and seed catalogs.
    pub fn create(dir: &Path, clips: &[(CatalogEntry, Waveform)]) -> Result<Self, AudioError> {
        fs::create_dir_all(dir)?;
        let mut index = String::new();
        for (entry, clip) in clips {
            wav::write_wav(&dir.join(&entry.path), clip, 0)?;
            index.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            index.push('\n');
        }
        fs::write(dir.join(CATALOG_FILE), index)?;
        Self::load(dir)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.entries.get(id)
    }

    /// Ids carrying `tag`, in id order.
    pub fn with_tag(&self, tag: &str) -> Vec<&str> {
        self.entries
            .values()
            .filter(|e| e.tags.iter().any(|t| t.eq_ignore_ascii_case(tag)))
            .map(|e| e.id.as_str())
            .collect()
    }

    /// The clip resampled to 16 kHz.
    pub fn load_clip(&self, id: &str) -> Result<Waveform, AudioError> {
        let entry = self.get(id).ok_or_else(|| AudioError::UnknownClip(id.to_string()))?;
        Ok(resample(&wav::read_wav(&self.dir.join(&entry.path))?, SAMPLE_RATE))
    }
}
