//! Sample-accurate placement of clips on a shared timeline.

use serde::{Deserialize, Serialize};

use super::{seconds_to_samples, AudioError, Waveform};
use crate::episode::InsertMode;
use crate::SAMPLE_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Speech,
    Event,
    Background,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub clip: Waveform,
    pub start: usize,
    pub channel: Channel,
}

impl Placement {
    pub fn end(&self) -> usize {
        self.start + self.clip.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub placements: Vec<Placement>,
    pub total_len: usize,
    pub rate: u32,
    /// Clamp rendered output to [-1, 1] instead of rejecting overflowing overlays.
    pub hard_clip: bool,
}

/// Turn `interrupting` starts `seconds` before turn `interrupted` ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapSpec {
    pub interrupted: usize,
    pub interrupting: usize,
    pub seconds: f64,
}

impl Timeline {
    pub fn empty(rate: u32) -> Self {
        Timeline { placements: Vec::new(), total_len: 0, rate, hard_clip: false }
    }

    pub fn duration(&self) -> f64 {
        self.total_len as f64 / self.rate as f64
    }

    /// Additive mono mixdown of every placement.
    pub fn render(&self) -> Waveform {
        let mut out = vec![0.0; self.total_len];
        for p in &self.placements {
            for (o, s) in out[p.start..p.end()].iter_mut().zip(&p.clip.samples) {
                *o += s;
            }
        }
        if self.hard_clip {
            for s in &mut out {
                *s = s.clamp(-1.0, 1.0);
            }
        }
        Waveform { samples: out, rate: self.rate }
    }

    pub fn speech(&self) -> impl Iterator<Item = &Placement> {
        self.placements.iter().filter(|p| p.channel == Channel::Speech)
    }
}

/// Samples shared by two placements.
pub fn realized_overlap(a: &Placement, b: &Placement) -> usize {
    a.end().min(b.end()).saturating_sub(a.start.max(b.start))
}

/// Lays speech clips end to end with `gaps_seconds[k]` of silence after clip
/// `k`. An overlap spec moves its interrupting clip so that it starts
/// `seconds` before the interrupted clip ends; the clip after an interruption
/// starts once everything before it has finished.
pub fn assemble_timeline(
    clips: &[Waveform],
    gaps_seconds: &[f64],
    overlaps: &[OverlapSpec],
) -> Result<Timeline, AudioError> {
    for c in clips {
        if c.rate != SAMPLE_RATE {
            return Err(AudioError::RateMismatch { expected: SAMPLE_RATE, got: c.rate });
        }
    }
    if let Some(g) = gaps_seconds.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(AudioError::BadOverlap(format!("gap {g} must be a non-negative duration")));
    }
    let mut interrupts: Vec<Option<&OverlapSpec>> = vec![None; clips.len()];
    for spec in overlaps {
        if spec.interrupting != spec.interrupted + 1 || spec.interrupting >= clips.len() {
            return Err(AudioError::BadOverlap(format!(
                "turn {} cannot interrupt turn {}",
                spec.interrupting, spec.interrupted
            )));
        }
        if !(spec.seconds > 0.0 && spec.seconds.is_finite()) {
            return Err(AudioError::BadOverlap(format!("overlap of {} s", spec.seconds)));
        }
        if interrupts[spec.interrupting].replace(spec).is_some() {
            return Err(AudioError::BadOverlap(format!("turn {} interrupts twice", spec.interrupting)));
        }
    }

    let mut tl = Timeline::empty(SAMPLE_RATE);
    let mut horizon = 0usize;
    for (k, clip) in clips.iter().enumerate() {
        let start = match interrupts[k] {
            Some(spec) => {
                let prev = &tl.placements[spec.interrupted];
                let d = seconds_to_samples(spec.seconds, SAMPLE_RATE);
                // The interrupter must also last at least as long as the overlap.
                for (turn, len) in [(spec.interrupted, prev.clip.len()), (k, clip.len())] {
                    if d > len {
                        return Err(AudioError::OverlapTooLong {
                            turn,
                            seconds: spec.seconds,
                            available: len as f64 / SAMPLE_RATE as f64,
                        });
                    }
                }
                prev.end() - d
            }
            None if k == 0 => 0,
            None => horizon + seconds_to_samples(gaps_seconds.get(k - 1).copied().unwrap_or(0.0), SAMPLE_RATE),
        };
        tl.placements.push(Placement { clip: clip.clone(), start, channel: Channel::Speech });
        horizon = horizon.max(start + clip.len());
    }
    tl.total_len = horizon;
    Ok(tl)
}

/// Places an event clip at `anchor_s`. `GapInsert` opens a gap: every
/// placement starting at or after the anchor moves later by the clip length.
/// `Overlay` mixes the clip in place.
pub fn insert_event(tl: &Timeline, anchor_s: f64, clip: &Waveform, mode: InsertMode) -> Result<Timeline, AudioError> {
    if clip.rate != tl.rate {
        return Err(AudioError::RateMismatch { expected: tl.rate, got: clip.rate });
    }
    if !(anchor_s >= 0.0 && anchor_s <= tl.duration() + 0.5 / tl.rate as f64) {
        return Err(AudioError::AnchorOutOfRange { anchor_s, duration_s: tl.duration() });
    }
    let anchor = seconds_to_samples(anchor_s, tl.rate).min(tl.total_len);
    let mut out = tl.clone();
    let event = Placement { clip: clip.clone(), start: anchor, channel: Channel::Event };
    match mode {
        InsertMode::GapInsert => {
            for p in &mut out.placements {
                if p.start >= anchor {
                    p.start += clip.len();
                }
            }
            out.total_len += clip.len();
            out.placements.push(event);
        }
        InsertMode::Overlay => {
            out.total_len = out.total_len.max(event.end());
            out.placements.push(event);
            if !out.hard_clip {
                let rendered = out.render();
                let peak = rendered.samples[anchor..anchor + clip.len()]
                    .iter()
                    .fold(0.0f64, |m, s| m.max(s.abs()));
                if peak > 1.0 {
                    return Err(AudioError::PeakOverflow { peak });
                }
            }
        }
    }
    Ok(out)
}
