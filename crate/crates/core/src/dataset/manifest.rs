//! JSONL episode manifest with an in-memory id index.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::DatasetError;
use crate::episode::{validate_episode, Episode, InstructionType};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy)]
struct Entry {
    offset: u64,
    len: usize,
    line: usize,
}

/// An open manifest. Paths inside episodes are relative to the manifest's
/// directory. One writer at a time; readers may open it concurrently.
#[derive(Debug)]
pub struct Manifest {
    path: PathBuf,
    index: HashMap<String, Entry>,
    order: Vec<String>,
    per_type: BTreeMap<InstructionType, usize>,
    end: u64,
}

fn parse_line(bytes: &[u8], line: usize) -> Result<Episode, DatasetError> {
    serde_json::from_slice(bytes).map_err(|e| DatasetError::CorruptLine { line, detail: e.to_string() })
}

impl Manifest {
    /// Creates an empty manifest, truncating any existing file.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        File::create(&path)?;
        Ok(Manifest { path, index: HashMap::new(), order: Vec::new(), per_type: BTreeMap::new(), end: 0 })
    }

    /// Opens a manifest and indexes every line.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let path = path.into();
        let mut reader = BufReader::new(File::open(&path)?);
        let mut m = Manifest { path, index: HashMap::new(), order: Vec::new(), per_type: BTreeMap::new(), end: 0 };
        let mut buf = Vec::new();
        let mut line = 0;
        loop {
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf)?;
            if n == 0 {
                break;
            }
            line += 1;
            let offset = m.end;
            m.end += n as u64;
            let body = buf.strip_suffix(b"\n").unwrap_or(&buf);
            if body.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            if !buf.ends_with(b"\n") {
                return Err(DatasetError::CorruptLine { line, detail: "unterminated final line".into() });
            }
            let episode = parse_line(body, line)?;
            m.insert(episode.id, episode.instruction_type, Entry { offset, len: body.len(), line })?;
        }
        Ok(m)
    }

    fn insert(&mut self, id: String, itype: InstructionType, entry: Entry) -> Result<(), DatasetError> {
        if self.index.contains_key(&id) {
            return Err(DatasetError::DuplicateId(id));
        }
        *self.per_type.entry(itype).or_default() += 1;
        self.order.push(id.clone());
        self.index.insert(id, entry);
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Directory that relative episode paths resolve against.
    pub fn root(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root().join(relative)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Ids in file order.
    pub fn ids(&self) -> &[String] {
        &self.order
    }

    pub fn per_type_counts(&self) -> &BTreeMap<InstructionType, usize> {
        &self.per_type
    }

    /// 1-based manifest line of an episode.
    pub fn line_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|e| e.line)
    }

    /// Validates and appends one episode. The line goes out in a single
    /// write and is synced before returning.
    pub fn write_episode(&mut self, episode: &Episode) -> Result<(), DatasetError> {
        let report = validate_episode(episode);
        if !report.is_valid() {
            return Err(DatasetError::Invalid { id: episode.id.clone(), report });
        }
        if self.index.contains_key(&episode.id) {
            return Err(DatasetError::DuplicateId(episode.id.clone()));
        }
        let mut line = serde_json::to_vec(episode).map_err(std::io::Error::other)?;
        let len = line.len();
        line.push(b'\n');
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        file.write_all(&line)?;
        file.sync_data()?;
        let entry = Entry { offset: self.end, len, line: self.order.len() + 1 };
        self.end += line.len() as u64;
        self.insert(episode.id.clone(), episode.instruction_type, entry)
    }

    pub fn read_episode(&self, id: &str) -> Result<Episode, DatasetError> {
        let entry = self.index.get(id).ok_or_else(|| DatasetError::NotFound(id.to_string()))?;
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(entry.offset))?;
        let mut buf = vec![0; entry.len];
        file.read_exact(&mut buf)?;
        parse_line(&buf, entry.line)
    }

    /// Every episode in file order.
    pub fn episodes(&self) -> Result<Vec<Episode>, DatasetError> {
        let reader = BufReader::new(File::open(&self.path)?);
        let mut out = Vec::with_capacity(self.len());
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(parse_line(line.as_bytes(), i + 1)?);
            }
        }
        Ok(out)
    }

    /// Rewrites the manifest sorted by id via a temporary file and rename.
    /// The result depends only on the episode set.
    pub fn rewrite_sorted(&mut self) -> Result<(), DatasetError> {
        let mut episodes = self.episodes()?;
        episodes.sort_by(|a, b| a.id.cmp(&b.id));
        let dir = self.root();
        let mut tmp = tempfile::NamedTempFile::new_in(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir })?;
        for e in &episodes {
            serde_json::to_writer(&mut tmp, e).map_err(std::io::Error::other)?;
            tmp.write_all(b"\n")?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&self.path).map_err(|e| e.error)?;
        *self = Manifest::open(self.path.clone())?;
        Ok(())
    }
}
