//! Turning accepted scripts into rendered episodes on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::render::{render_episode, RenderConfig, RenderContext};
use crate::audio::wav::write_wav;
use crate::audio::AudioError;
use crate::cache::cache_key;
use crate::dataset::{DatasetError, Manifest, MANIFEST_FILE};
use crate::episode::{validate_episode, Episode, SpeakerProfile};
use crate::script::ScriptRecord;

#[derive(Debug, Error)]
pub enum RealizeError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line} of {path}: {detail}")]
    BadLine { path: String, line: usize, detail: String },
    #[error("voice bank is empty")]
    NoVoices,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl RealizeError {
    pub fn code(&self) -> &'static str {
        match self {
            RealizeError::Io(_) => "IO",
            RealizeError::BadLine { .. } => "BAD_LINE",
            RealizeError::NoVoices => "NO_VOICES",
            RealizeError::Dataset(e) => e.code(),
        }
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RealizeError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RealizeError::BadLine {
                path: path.display().to_string(),
                line: i + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(std::io::Error::other)?);
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// Voices available for cloning, matched to speakers by demographic.
#[derive(Debug, Clone)]
pub struct VoiceBank {
    voices: Vec<SpeakerProfile>,
}

impl VoiceBank {
    pub fn new(voices: Vec<SpeakerProfile>) -> Result<Self, RealizeError> {
        if voices.is_empty() {
            return Err(RealizeError::NoVoices);
        }
        Ok(VoiceBank { voices })
    }

    pub fn load(path: &Path) -> Result<Self, RealizeError> {
        VoiceBank::new(read_jsonl(path)?)
    }

    pub fn voices(&self) -> &[SpeakerProfile] {
        &self.voices
    }

    /// One profile per human speaker slot of the record. A slot with a known
    /// demographic gets a matching voice when one is free; otherwise any
    /// unused voice, and only when the bank runs dry is a voice reused.
    pub fn assign(&self, record: &ScriptRecord, seed: u64) -> Vec<SpeakerProfile> {
        let slots = record
            .conversation
            .human_speakers()
            .iter()
            .filter_map(|s| s.human_index())
            .max()
            .map_or(0, |i| i + 1);
        let mut rng = episode_rng(seed ^ 0x766f_6963_6573, &record.id);
        let mut used: Vec<usize> = Vec::new();
        (0..slots)
            .map(|slot| {
                let wanted = record.speaker_infos.get(slot).and_then(|s| s.demographic);
                let free: Vec<usize> = (0..self.voices.len()).filter(|i| !used.contains(i)).collect();
                let matching: Vec<usize> = free
                    .iter()
                    .copied()
                    .filter(|&i| wanted.is_some_and(|d| self.voices[i].demographic() == d))
                    .collect();
                let all: Vec<usize> = (0..self.voices.len()).collect();
                let pool = [matching, free, all].into_iter().find(|p| !p.is_empty()).expect("non-empty bank");
                let pick = *pool.choose(&mut rng).expect("non-empty pool");
                used.push(pick);
                self.voices[pick].clone()
            })
            .collect()
    }
}

fn episode_seed(seed: u64, id: &str) -> u64 {
    let digest = cache_key(&["episode", id]);
    seed ^ u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

fn episode_rng(seed: u64, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(episode_seed(seed, id))
}

#[derive(Debug, Clone)]
pub struct RealizeConfig {
    pub render: RenderConfig,
    pub seed: u64,
    /// Directory the records' frame references are relative to. When set,
    /// frames are copied under `frames/` in the output directory.
    pub frames_dir: Option<PathBuf>,
    pub threads: usize,
}

impl Default for RealizeConfig {
    fn default() -> Self {
        RealizeConfig {
            render: RenderConfig::default(),
            seed: 0,
            frames_dir: None,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RealizeReport {
    pub written: usize,
    /// Episode id to error code.
    pub failed: BTreeMap<String, String>,
    pub total_audio_seconds: f64,
}

fn realize_one(
    record: &ScriptRecord,
    bank: &VoiceBank,
    ctx: &RenderContext<'_>,
    cfg: &RealizeConfig,
    out_dir: &Path,
) -> Result<(Episode, f64), String> {
    let mut frame_refs = Vec::with_capacity(record.frame_refs.len());
    for f in &record.frame_refs {
        match &cfg.frames_dir {
            Some(src) => {
                let rel = format!("frames/{f}");
                let dest = out_dir.join(&rel);
                if !dest.exists() {
                    if let Some(parent) = dest.parent() {
                        std::fs::create_dir_all(parent).map_err(|_| "IO".to_string())?;
                    }
                    std::fs::copy(src.join(f), &dest).map_err(|_| "FRAME_MISSING".to_string())?;
                }
                frame_refs.push(rel);
            }
            None => frame_refs.push(f.clone()),
        }
    }
    let audio_ref = format!("audio/{}.wav", record.id);
    let mut episode = Episode {
        id: record.id.clone(),
        instruction_type: record.instruction_type,
        original_instruction: record.original_instruction.clone(),
        conversation: record.conversation.clone(),
        audio_ref: audio_ref.clone(),
        frame_refs,
        actions: record.actions.clone(),
        speakers: bank.assign(record, cfg.seed),
        provenance: record.provenance.clone(),
        mix_plan: None,
    };
    let report = validate_episode(&episode);
    if let Some(issue) = report.issues.first() {
        return Err(issue.code.clone());
    }
    let seed = episode_seed(cfg.seed, &record.id);
    let rendered = render_episode(&episode, &record.sound_tags, ctx, &cfg.render, seed)
        .map_err(|e: AudioError| e.code().to_string())?;
    write_wav(&out_dir.join(&audio_ref), &rendered.audio, seed).map_err(|e| e.code().to_string())?;
    episode.mix_plan = Some(rendered.mix_plan);
    Ok((episode, rendered.audio.duration()))
}

/// Renders every record into `out_dir/audio/{id}.wav` and writes the
/// episodes, in record order, to `out_dir/manifest.jsonl`. A record that
/// fails is reported and skipped.
pub fn realize_records(
    records: &[ScriptRecord],
    bank: &VoiceBank,
    ctx: &RenderContext<'_>,
    cfg: &RealizeConfig,
    out_dir: &Path,
) -> Result<RealizeReport, RealizeError> {
    std::fs::create_dir_all(out_dir.join("audio"))?;
    let threads = cfg.threads.max(1).min(records.len().max(1));
    let per = records.len().div_ceil(threads).max(1);
    let results: Vec<Result<(Episode, f64), String>> = std::thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(per)
            .map(|chunk| s.spawn(move || chunk.iter().map(|r| realize_one(r, bank, ctx, cfg, out_dir)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("render thread panicked")).collect()
    });
    let mut manifest = Manifest::create(out_dir.join(MANIFEST_FILE))?;
    let mut report = RealizeReport::default();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok((episode, seconds)) => {
                manifest.write_episode(&episode)?;
                report.written += 1;
                report.total_audio_seconds += seconds;
            }
            Err(code) => {
                tracing::warn!(id = %record.id, code, "episode not realized");
                report.failed.insert(record.id.clone(), code);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{AgeGroup, Demographic, Gender, InstructionType, Provenance};
    use crate::parse_markup;
    use crate::script::SpeakerInfo;

    fn voice(id: &str, gender: Gender, age_group: AgeGroup) -> SpeakerProfile {
        SpeakerProfile { id: id.into(), gender, age_group, timbre_ref: format!("{id}.wav") }
    }

    fn record(infos: Vec<SpeakerInfo>) -> ScriptRecord {
        ScriptRecord {
            id: "r-0".into(),
            instruction_type: InstructionType::Triadic,
            original_instruction: "open the drawer".into(),
            conversation: parse_markup("[S1] a. [S2] b. [S3] c. [Robot] Open it? [S1] Yes. [Robot] OK. [ACT]").unwrap(),
            scene_description: String::new(),
            speaker_infos: infos,
            selected_sound_type: None,
            sound_tags: Vec::new(),
            frame_refs: vec!["f.png".into()],
            actions: Vec::new(),
            provenance: Provenance { source: "t".into(), trajectory_id: "t".into() },
        }
    }

    #[test]
    fn voices_follow_demographics_without_reuse() {
        let bank = VoiceBank::new(vec![
            voice("m-a", Gender::Male, AgeGroup::Adult),
            voice("f-s", Gender::Female, AgeGroup::Senior),
            voice("f-c", Gender::Female, AgeGroup::Child),
            voice("m-c", Gender::Male, AgeGroup::Child),
        ])
        .unwrap();
        let infos = [Demographic::ALL[5], Demographic::ALL[1], Demographic::ALL[2]]
            .map(SpeakerInfo::from_demographic)
            .to_vec();
        for seed in 0..20 {
            let got: Vec<String> = bank.assign(&record(infos.clone()), seed).into_iter().map(|v| v.id).collect();
            assert_eq!(got, ["f-c", "f-s", "m-a"]);
        }
        let anon = bank.assign(&record(Vec::new()), 3);
        assert_eq!(anon.len(), 3);
        let ids: std::collections::HashSet<_> = anon.iter().map(|v| &v.id).collect();
        assert_eq!(ids.len(), 3);
        assert_eq!(anon, bank.assign(&record(Vec::new()), 3));
    }

    #[test]
    fn empty_bank_is_rejected() {
        assert_eq!(VoiceBank::new(Vec::new()).unwrap_err().code(), "NO_VOICES");
    }
}
