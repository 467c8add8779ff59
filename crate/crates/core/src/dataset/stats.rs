//! Corpus statistics, always recounted from the manifest.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DatasetError, Manifest};
use crate::audio::wav::wav_info;
use crate::episode::{Episode, InstructionType};
use crate::lexicon;

/// Width of an audio-duration histogram bin in seconds.
pub const DURATION_BIN_SECONDS: u32 = 5;
/// Width of an action-length histogram bin in steps.
pub const ACTION_BIN_STEPS: usize = 50;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub episodes: usize,
    /// Distinct source trajectories.
    pub trajectories: usize,
    pub skills: usize,
    pub objects: usize,
    pub speakers: usize,
    pub sound_events: usize,
    pub backgrounds: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub totals: Totals,
    /// Every instruction type, zero counts included.
    pub per_type: BTreeMap<InstructionType, usize>,
    /// Bin label (`"0-5"` seconds) to count.
    pub audio_duration: BTreeMap<String, usize>,
    /// Episodes whose audio file could not be read.
    pub audio_missing: usize,
    pub total_audio_seconds: f64,
    /// Bin label (`"0-49"` steps) to count.
    pub action_length: BTreeMap<String, usize>,
}

fn bin_label(lo: usize, width: usize, inclusive: bool) -> String {
    let start = lo / width * width;
    if inclusive {
        format!("{:05}-{:05}", start, start + width - 1)
    } else {
        format!("{:03}-{:03}", start, start + width)
    }
}

/// Statistics over a set of episodes. `audio_seconds` yields the duration of
/// an episode's audio or `None` when it is unavailable.
pub fn stats_for(episodes: &[Episode], audio_seconds: impl Fn(&Episode) -> Option<f64>) -> StatsReport {
    let mut report = StatsReport {
        per_type: InstructionType::ALL.iter().map(|&t| (t, 0)).collect(),
        ..Default::default()
    };
    let mut trajectories = BTreeSet::new();
    let mut skills = BTreeSet::new();
    let mut objects = BTreeSet::new();
    let mut speakers = BTreeSet::new();
    let mut events = BTreeSet::new();
    let mut backgrounds = BTreeSet::new();
    for e in episodes {
        report.totals.episodes += 1;
        *report.per_type.entry(e.instruction_type).or_default() += 1;
        trajectories.insert(e.provenance.trajectory_id.as_str());
        let ex = lexicon::extract(&e.original_instruction);
        skills.extend(ex.skill);
        objects.extend(ex.objects);
        speakers.extend(e.speakers.iter().map(|s| s.id.as_str()));
        if let Some(plan) = &e.mix_plan {
            events.extend(plan.event_insertions.iter().map(|i| i.clip_id.as_str()));
            backgrounds.extend(plan.background_id.as_deref());
        }
        match audio_seconds(e) {
            Some(d) => {
                report.total_audio_seconds += d;
                let label = bin_label(d.max(0.0) as usize, DURATION_BIN_SECONDS as usize, false);
                *report.audio_duration.entry(label).or_default() += 1;
            }
            None => report.audio_missing += 1,
        }
        *report.action_length.entry(bin_label(e.actions.len(), ACTION_BIN_STEPS, true)).or_default() += 1;
    }
    report.totals.trajectories = trajectories.len();
    report.totals.skills = skills.len();
    report.totals.objects = objects.len();
    report.totals.speakers = speakers.len();
    report.totals.sound_events = events.len();
    report.totals.backgrounds = backgrounds.len();
    report
}

/// Full recount over a manifest; audio durations come from WAV headers.
pub fn compute_stats(manifest: &Manifest) -> Result<StatsReport, DatasetError> {
    let episodes = manifest.episodes()?;
    Ok(stats_for(&episodes, |e| {
        wav_info(&manifest.resolve(&e.audio_ref)).ok().map(|i| i.frames as f64 / i.rate as f64)
    }))
}
