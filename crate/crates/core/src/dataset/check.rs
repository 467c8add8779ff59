//! Whole-dataset consistency check.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Manifest;
use crate::audio::wav::wav_info;
use crate::episode::{validate_episode, InstructionType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckIssue {
    pub id: String,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub episodes: usize,
    pub per_type: BTreeMap<InstructionType, usize>,
    pub issues: Vec<CheckIssue>,
    /// The manifest itself could not be read.
    pub corruption: Option<String>,
}

impl CheckReport {
    /// 0 clean, 1 validation failures, 2 unreadable or corrupt data.
    pub fn exit_code(&self) -> i32 {
        if self.corruption.is_some() {
            2
        } else if !self.issues.is_empty() {
            1
        } else {
            0
        }
    }
}

/// Validates every episode and checks that its audio exists as mono PCM16
/// at 16 kHz and that its frames exist.
pub fn check_manifest(path: &Path) -> CheckReport {
    let mut report = CheckReport::default();
    let manifest = match Manifest::open(path) {
        Ok(m) => m,
        Err(e) => {
            report.corruption = Some(format!("{e} ({})", e.code()));
            return report;
        }
    };
    let episodes = match manifest.episodes() {
        Ok(v) => v,
        Err(e) => {
            report.corruption = Some(format!("{e} ({})", e.code()));
            return report;
        }
    };
    let mut issue = |id: &str, code: &str, detail: String| {
        report.issues.push(CheckIssue { id: id.to_string(), code: code.to_string(), detail })
    };
    for e in &episodes {
        for i in validate_episode(e).issues {
            issue(&e.id, &i.code, i.detail);
        }
        match wav_info(&manifest.resolve(&e.audio_ref)) {
            Ok(info) if info.is_canonical() => {}
            Ok(info) => issue(
                &e.id,
                "AUDIO_FORMAT",
                format!("{} ch, {} Hz, {} bit, integer={}", info.channels, info.rate, info.bits, info.integer),
            ),
            Err(err) => issue(&e.id, "AUDIO_MISSING", format!("{}: {err}", e.audio_ref)),
        }
        for f in &e.frame_refs {
            if !manifest.resolve(f).is_file() {
                issue(&e.id, "FRAME_MISSING", f.clone());
            }
        }
    }
    report.episodes = episodes.len();
    report.per_type = manifest.per_type_counts().clone();
    report
}
