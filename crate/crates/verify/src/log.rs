//! Append-only JSONL verdict log.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub episode_id: String,
    pub annotator_id: String,
    pub intent_recoverable: bool,
    pub phenomenon_fidelity: bool,
    #[serde(default)]
    pub notes: String,
    /// Milliseconds since the Unix epoch; 0 lets the log assign one.
    #[serde(default)]
    pub timestamp: u64,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("verdict log line {line} is corrupt: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("annotator `{annotator}` already judged `{episode}`")]
    Duplicate { episode: String, annotator: String },
    #[error("timestamp {got} precedes {last} for annotator `{annotator}`")]
    NonMonotone { annotator: String, got: u64, last: u64 },
    #[error("injected crash")]
    Crashed,
}

impl LogError {
    pub fn code(&self) -> &'static str {
        match self {
            LogError::Io(_) => "IO",
            LogError::Corrupt { .. } => "LOG_CORRUPT",
            LogError::Duplicate { .. } => "DUPLICATE_VERDICT",
            LogError::NonMonotone { .. } => "NON_MONOTONE_TIMESTAMP",
            LogError::Crashed => "CRASHED",
        }
    }
}

/// A crash to simulate on one append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Only the first `keep` bytes of the line reach the file.
    TornAppend { keep: usize },
    /// The line is written and synced, then the process dies before acking.
    AfterAppend,
}

#[derive(Debug)]
pub struct VerdictLog {
    path: PathBuf,
    file: File,
    verdicts: Vec<Verdict>,
    judged: HashSet<(String, String)>,
    last_timestamp: HashMap<String, u64>,
    appends: usize,
    fault: Option<(usize, Fault)>,
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl VerdictLog {
    /// Opens or creates the log and rebuilds the index. A torn final line,
    /// left by a crash mid-write, is cut off; any other bad line is an error.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LogError> {
        let path = path.into();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            tracing::warn!(path = %path.display(), dropped = bytes.len() - complete, "truncating torn verdict log tail");
            file.set_len(complete as u64)?;
            file.sync_all()?;
        }
        let mut log = VerdictLog {
            path,
            file,
            verdicts: Vec::new(),
            judged: HashSet::new(),
            last_timestamp: HashMap::new(),
            appends: 0,
            fault: None,
        };
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let v: Verdict = serde_json::from_slice(line)
                .map_err(|e| LogError::Corrupt { line: i + 1, detail: e.to_string() })?;
            if log.judged.contains(&(v.episode_id.clone(), v.annotator_id.clone())) {
                return Err(LogError::Corrupt { line: i + 1, detail: "repeated verdict".into() });
            }
            log.remember(v);
        }
        Ok(log)
    }

    fn remember(&mut self, v: Verdict) {
        self.judged.insert((v.episode_id.clone(), v.annotator_id.clone()));
        let last = self.last_timestamp.entry(v.annotator_id.clone()).or_default();
        *last = (*last).max(v.timestamp);
        self.verdicts.push(v);
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn len(&self) -> usize {
        self.verdicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }

    pub fn has_judged(&self, episode: &str, annotator: &str) -> bool {
        self.judged.contains(&(episode.to_string(), annotator.to_string()))
    }

    /// Arms a crash on the `nth` append from now (0 = the next one).
    pub fn inject_fault(&mut self, nth: usize, fault: Fault) {
        self.fault = Some((self.appends + nth, fault));
    }

    /// Appends and syncs one verdict; on `Ok` it is durable. Returns the
    /// verdict as stored, with its timestamp filled in.
    pub fn append(&mut self, mut v: Verdict) -> Result<Verdict, LogError> {
        if self.has_judged(&v.episode_id, &v.annotator_id) {
            return Err(LogError::Duplicate { episode: v.episode_id, annotator: v.annotator_id });
        }
        let last = self.last_timestamp.get(&v.annotator_id).copied().unwrap_or(0);
        if v.timestamp == 0 {
            v.timestamp = now_ms().max(last + 1);
        } else if v.timestamp < last {
            return Err(LogError::NonMonotone { annotator: v.annotator_id, got: v.timestamp, last });
        }
        let mut line = serde_json::to_vec(&v).map_err(std::io::Error::other)?;
        line.push(b'\n');
        let this = self.appends;
        self.appends += 1;
        match self.fault {
            Some((at, Fault::TornAppend { keep })) if at == this => {
                self.file.write_all(&line[..keep.min(line.len() - 1)])?;
                self.file.sync_data()?;
                return Err(LogError::Crashed);
            }
            Some((at, Fault::AfterAppend)) if at == this => {
                self.file.write_all(&line)?;
                self.file.sync_data()?;
                return Err(LogError::Crashed);
            }
            _ => {}
        }
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.remember(v.clone());
        Ok(v)
    }
}

/// Verdicts read straight from a log file, without repair.
pub fn read_log(path: &Path) -> Result<Vec<Verdict>, LogError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| LogError::Corrupt { line: i + 1, detail: e.to_string() }))
        .collect()
}
