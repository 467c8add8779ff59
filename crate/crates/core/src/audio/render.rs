//! Rendering a scripted episode to a single 16 kHz mono track.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::catalog::Catalog;
use super::ctc::{ctc_force_align, CtcPosteriors};
use super::snr::{active_mask, mix_background};
use super::timeline::{assemble_timeline, insert_event, realized_overlap, OverlapSpec, Timeline};
use super::tts::{synthesize_turn, TtsClient};
use super::{seconds_to_samples, AudioError, Waveform};
use crate::episode::{AgeGroup, EventInsertion, Gender, InsertMode, MixPlan, Episode, SpeakerProfile, Speaker, Turn};
use crate::SAMPLE_RATE;

/// Number of non-blank CTC symbols used for transcripts (letters a-z).
pub const ALPHABET: usize = 26;

/// CTC labels of the letters in `text`, each with its character index.
pub fn text_labels(text: &str) -> Vec<(usize, usize)> {
    text.chars()
        .enumerate()
        .filter(|(_, c)| c.is_ascii_alphabetic())
        .map(|(i, c)| (i, (c.to_ascii_lowercase() as u8 - b'a') as usize + 1))
        .collect()
}

/// Produces frame-level CTC posteriors for a clip and its transcript.
pub trait AcousticModel: Send + Sync {
    fn posteriors(&self, clip: &Waveform, text: &str) -> Result<CtcPosteriors, AudioError>;
}

/// Offline stand-in for an acoustic model: assumes characters are spoken at
/// a uniform rate across the clip's active region and emits peaked posteriors
/// around the expected letter, perturbed by seeded noise.
#[derive(Debug, Clone)]
pub struct MockAcoustic {
    pub frame_seconds: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for MockAcoustic {
    fn default() -> Self {
        MockAcoustic { frame_seconds: 0.02, noise: 0.5, seed: 0 }
    }
}

impl AcousticModel for MockAcoustic {
    fn posteriors(&self, clip: &Waveform, text: &str) -> Result<CtcPosteriors, AudioError> {
        let mask = active_mask(clip);
        let first = mask.iter().position(|&m| m).unwrap_or(0) as f64 / clip.rate as f64;
        let last = mask.iter().rposition(|&m| m).map_or(clip.len(), |i| i + 1) as f64 / clip.rate as f64;
        let chars: Vec<char> = text.chars().collect();
        let frames = ((clip.duration() / self.frame_seconds).ceil() as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ chars.len() as u64);
        let rows = (0..frames)
            .map(|t| {
                let time = (t as f64 + 0.5) * self.frame_seconds;
                let pos = (time - first) / (last - first).max(1e-9) * chars.len() as f64;
                let hot = (pos >= 0.0 && (pos as usize) < chars.len())
                    .then(|| chars[pos as usize])
                    .filter(char::is_ascii_alphabetic)
                    .map_or(0, |c| (c.to_ascii_lowercase() as u8 - b'a') as usize + 1);
                (0..=ALPHABET)
                    .map(|c| {
                        let base = if c == hot { 4.0 } else if c == 0 { 1.0 } else { 0.0 };
                        base + self.noise * rng.gen::<f64>()
                    })
                    .collect()
            })
            .collect();
        CtcPosteriors::from_logits(rows, self.frame_seconds)
    }
}

/// Seconds from the start of the letter at or after `char_pos` to the end of
/// the clip, located by forced alignment. Falls back to a uniform-rate
/// estimate when the transcript has no letters there or alignment fails.
pub fn overlap_from_anchor(clip: &Waveform, text: &str, char_pos: usize, model: &dyn AcousticModel) -> f64 {
    let labeled = text_labels(text);
    let fallback = {
        let n = text.chars().count().max(1);
        clip.duration() * (1.0 - char_pos.min(n) as f64 / n as f64)
    };
    let Some(target) = labeled.iter().position(|&(i, _)| i >= char_pos) else {
        return fallback;
    };
    let labels: Vec<usize> = labeled.iter().map(|&(_, l)| l).collect();
    let aligned = model.posteriors(clip, text).and_then(|post| {
        let a = ctc_force_align(&post, &labels)?;
        Ok(a.spans[target].0 as f64 * post.frame_seconds)
    });
    match aligned {
        Ok(start) => clip.duration() - start,
        Err(e) => {
            tracing::debug!(error = %e, "alignment failed; using uniform-rate estimate");
            fallback
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderConfig {
    /// Silence between consecutive non-overlapping turns, drawn uniformly.
    pub gap_seconds: (f64, f64),
    pub snr_db: (f64, f64),
    pub robot_voice: SpeakerProfile,
    pub event_mode: InsertMode,
    pub hard_clip: bool,
    /// Final output is scaled down when its peak exceeds this.
    pub peak_ceiling: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            gap_seconds: (0.15, 0.5),
            snr_db: (0.0, 20.0),
            robot_voice: SpeakerProfile {
                id: "robot".into(),
                age_group: AgeGroup::Adult,
                gender: Gender::Male,
                timbre_ref: "robot".into(),
            },
            event_mode: InsertMode::GapInsert,
            hard_clip: false,
            peak_ceiling: 0.99,
        }
    }
}

pub struct RenderContext<'a> {
    pub tts: &'a dyn TtsClient,
    pub acoustic: &'a dyn AcousticModel,
    pub events: Option<&'a Catalog>,
    pub backgrounds: Option<&'a Catalog>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedOverlap {
    pub spec: OverlapSpec,
    pub requested_samples: usize,
    pub realized_samples: usize,
}

#[derive(Debug, Clone)]
pub struct RenderedEpisode {
    pub audio: Waveform,
    pub timeline: Timeline,
    pub mix_plan: MixPlan,
    pub overlaps: Vec<RealizedOverlap>,
    pub achieved_snr_db: Option<f64>,
}

fn voice_for<'a>(ep: &'a Episode, turn: &Turn, cfg: &'a RenderConfig) -> Result<&'a SpeakerProfile, AudioError> {
    match turn.speaker {
        Speaker::Robot => Ok(&cfg.robot_voice),
        s => {
            let i = s.human_index().expect("human speaker");
            ep.speakers.get(i).ok_or_else(|| AudioError::UnsupportedVoice(format!("{} has no profile", s.tag())))
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, ids: &[&'a str]) -> Option<&'a str> {
    (!ids.is_empty()).then(|| ids[rng.gen_range(0..ids.len())])
}

/// Renders `ep`. `sound_tags[i]`, when present, restricts the clip chosen for
/// the i-th `[Sound]` anchor to catalog entries with that tag.
pub fn render_episode(
    ep: &Episode,
    sound_tags: &[String],
    ctx: &RenderContext<'_>,
    cfg: &RenderConfig,
    seed: u64,
) -> Result<RenderedEpisode, AudioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let turns = &ep.conversation.turns;
    let clips = turns
        .iter()
        .map(|t| synthesize_turn(t, voice_for(ep, t, cfg)?, ctx.tts))
        .collect::<Result<Vec<_>, _>>()?;

    let gaps: Vec<f64> = (1..turns.len()).map(|_| rng.gen_range(cfg.gap_seconds.0..=cfg.gap_seconds.1)).collect();
    let mut specs = Vec::new();
    for (k, turn) in turns.iter().enumerate() {
        let Some(span) = turn.overlap else { continue };
        if k + 1 >= turns.len() {
            continue;
        }
        let limit = clips[k].len().min(clips[k + 1].len());
        let seconds = overlap_from_anchor(&clips[k], &turn.text, span.start, ctx.acoustic);
        let samples = seconds_to_samples(seconds, SAMPLE_RATE).clamp(1, limit);
        specs.push(OverlapSpec { interrupted: k, interrupting: k + 1, seconds: samples as f64 / SAMPLE_RATE as f64 });
    }
    let mut tl = assemble_timeline(&clips, &gaps, &specs)?;
    tl.hard_clip = cfg.hard_clip;
    let overlaps = specs
        .iter()
        .map(|&spec| RealizedOverlap {
            spec,
            requested_samples: seconds_to_samples(spec.seconds, SAMPLE_RATE),
            realized_samples: realized_overlap(&tl.placements[spec.interrupted], &tl.placements[spec.interrupting]),
        })
        .collect();

    let mut insertions = Vec::new();
    for (anchor_index, (turn_idx, pos)) in ep.conversation.sound_anchors().into_iter().enumerate() {
        let Some(catalog) = ctx.events else { break };
        let tagged = sound_tags.get(anchor_index).map(|t| catalog.with_tag(t)).unwrap_or_default();
        let ids = if tagged.is_empty() { catalog.ids() } else { tagged };
        let Some(clip_id) = pick(&mut rng, &ids) else { break };
        let clip = catalog.load_clip(clip_id)?;
        let placement = &tl.placements[turn_idx];
        let n = turns[turn_idx].char_len().max(1);
        let offset = (placement.clip.len() as f64 * pos.min(n) as f64 / n as f64).round() as usize;
        let anchor_s = (placement.start + offset) as f64 / SAMPLE_RATE as f64;
        tl = insert_event(&tl, anchor_s, &clip, cfg.event_mode)?;
        insertions.push(EventInsertion { anchor_index, clip_id: clip_id.to_string(), mode: cfg.event_mode });
    }

    let target = rng.gen_range(cfg.snr_db.0..=cfg.snr_db.1);
    let background = ctx.backgrounds.and_then(|c| pick(&mut rng, &c.ids()).map(|id| (c, id.to_string())));
    let (mut audio, achieved, background_id) = match background {
        Some((catalog, id)) => {
            let noise = catalog.load_clip(&id)?;
            let mixed = mix_background(&tl, &noise, target)?;
            let achieved = mixed.achieved_snr_db()?;
            (mixed.mixture, Some(achieved), Some(id))
        }
        None => (tl.render(), None, None),
    };
    let peak = audio.peak();
    if peak > cfg.peak_ceiling {
        // A common gain leaves the SNR unchanged.
        let g = cfg.peak_ceiling / peak;
        audio.samples.iter_mut().for_each(|s| *s *= g);
    }
    Ok(RenderedEpisode {
        audio,
        timeline: tl,
        mix_plan: MixPlan { background_id, target_snr_db: target, event_insertions: insertions },
        overlaps,
        achieved_snr_db: achieved,
    })
}
