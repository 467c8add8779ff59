//! Tar shards with a sidecar index.

use std::fs::File;
use std::io::{BufWriter, Seek, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, Manifest};
use crate::episode::Episode;

pub const SHARD_CAPACITY: usize = 1024;
pub const SHARD_MAP_FILE: &str = "shards.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub index: String,
    pub episodes: usize,
    pub first_id: String,
    pub last_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackSummary {
    pub episodes: usize,
    pub shards: Vec<ShardInfo>,
}

/// Where one episode's members sit inside its shard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardIndexEntry {
    pub id: String,
    pub json_offset: u64,
    pub json_len: u64,
    pub audio_offset: u64,
    pub audio_len: u64,
}

fn header(len: u64) -> tar::Header {
    let mut h = tar::Header::new_ustar();
    h.set_size(len);
    h.set_mode(0o644);
    h.set_mtime(0);
    h.set_uid(0);
    h.set_gid(0);
    h.set_entry_type(tar::EntryType::Regular);
    h
}

/// Appends a member and returns the offset of its data.
fn append<W: Write + Seek>(b: &mut tar::Builder<W>, name: &str, data: &[u8]) -> std::io::Result<u64> {
    let mut h = header(data.len() as u64);
    b.append_data(&mut h, name, data)?;
    let end = b.get_mut().stream_position()?;
    Ok(end - (data.len() as u64).div_ceil(512) * 512)
}

fn write_shard(dir: &Path, k: usize, episodes: &[Episode], root: &Path) -> Result<ShardInfo, DatasetError> {
    let file = format!("shard-{k:05}.tar");
    let index = format!("shard-{k:05}.index.jsonl");
    let mut builder = tar::Builder::new(BufWriter::new(File::create(dir.join(&file))?));
    let mut entries = Vec::with_capacity(episodes.len());
    for e in episodes {
        let json = serde_json::to_vec(e).map_err(std::io::Error::other)?;
        let audio = std::fs::read(root.join(&e.audio_ref))?;
        let json_offset = append(&mut builder, &format!("{}.json", e.id), &json)?;
        let audio_offset = append(&mut builder, &format!("{}.wav", e.id), &audio)?;
        entries.push(ShardIndexEntry {
            id: e.id.clone(),
            json_offset,
            json_len: json.len() as u64,
            audio_offset,
            audio_len: audio.len() as u64,
        });
    }
    builder.into_inner()?.flush()?;
    let mut idx = BufWriter::new(File::create(dir.join(&index))?);
    for entry in &entries {
        serde_json::to_writer(&mut idx, entry).map_err(std::io::Error::other)?;
        idx.write_all(b"\n")?;
    }
    idx.flush()?;
    Ok(ShardInfo {
        file,
        index,
        episodes: episodes.len(),
        first_id: episodes.first().map(|e| e.id.clone()).unwrap_or_default(),
        last_id: episodes.last().map(|e| e.id.clone()).unwrap_or_default(),
    })
}

/// Sorts the manifest by id and writes tar shards of at most
/// [`SHARD_CAPACITY`] episodes (episode JSON plus audio) into `out_dir`,
/// each with a sidecar index, plus a shard map. Repeating a pack over the
/// same episode set gives byte-identical files.
pub fn pack(manifest: &mut Manifest, out_dir: &Path) -> Result<PackSummary, DatasetError> {
    manifest.rewrite_sorted()?;
    std::fs::create_dir_all(out_dir)?;
    let episodes = manifest.episodes()?;
    let root: PathBuf = manifest.root();
    let shards = std::thread::scope(|s| {
        let handles: Vec<_> = episodes
            .chunks(SHARD_CAPACITY)
            .enumerate()
            .map(|(k, chunk)| {
                let root = &root;
                s.spawn(move || write_shard(out_dir, k, chunk, root))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("shard writer panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    let summary = PackSummary { episodes: episodes.len(), shards };
    let map = serde_json::to_vec_pretty(&summary).map_err(std::io::Error::other)?;
    std::fs::write(out_dir.join(SHARD_MAP_FILE), map)?;
    Ok(summary)
}

/// Reads one episode back out of a shard through its index entry.
pub fn read_from_shard(shard: &Path, entry: &ShardIndexEntry) -> Result<(Episode, Vec<u8>), DatasetError> {
    use std::io::{Read, SeekFrom};
    let mut f = File::open(shard)?;
    let mut json = vec![0; entry.json_len as usize];
    f.seek(SeekFrom::Start(entry.json_offset))?;
    f.read_exact(&mut json)?;
    let mut audio = vec![0; entry.audio_len as usize];
    f.seek(SeekFrom::Start(entry.audio_offset))?;
    f.read_exact(&mut audio)?;
    let episode = serde_json::from_slice(&json)
        .map_err(|e| DatasetError::CorruptLine { line: 0, detail: format!("{}: {e}", shard.display()) })?;
    Ok((episode, audio))
}
