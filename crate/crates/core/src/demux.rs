//! Splitting a joint text/action token stream into segments.
//!
//! Text ids are passed through; the act marker switches to action mode and
//! every following id must be an action id until the codec's end symbol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ActionChunk, ActionTokenSeq, CodecError, CodecModel, BOS_ACT, EOS_ACT, VOCAB_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabLayout {
    pub text_size: u32,
    pub act_marker_id: u32,
    pub action_offset: u32,
    #[serde(default = "default_action_size")]
    pub action_size: u32,
    /// Action-local ids of the chunk delimiters.
    #[serde(default = "default_bos")]
    pub action_bos: u32,
    #[serde(default = "default_eos")]
    pub action_eos: u32,
}

fn default_action_size() -> u32 {
    VOCAB_SIZE
}
fn default_bos() -> u32 {
    BOS_ACT
}
fn default_eos() -> u32 {
    EOS_ACT
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Class {
    Text,
    Act,
    Action(u32),
    Illegal,
}

impl VocabLayout {
    /// Text ids `0..text_size`, marker right after, action ids after that.
    pub fn contiguous(text_size: u32) -> Self {
        VocabLayout {
            text_size,
            act_marker_id: text_size,
            action_offset: text_size + 1,
            action_size: VOCAB_SIZE,
            action_bos: BOS_ACT,
            action_eos: EOS_ACT,
        }
    }

    pub fn check(&self) -> Result<(), DemuxError> {
        let bad = |m: &str| Err(DemuxError::InvalidLayout(m.to_string()));
        if self.action_size != VOCAB_SIZE {
            return bad("action range must hold 2048 ids");
        }
        if self.act_marker_id < self.text_size {
            return bad("act marker overlaps the text range");
        }
        let action_end = self.action_offset as u64 + self.action_size as u64;
        if action_end > u32::MAX as u64 + 1 {
            return bad("action range overflows");
        }
        if (self.action_offset as u64) < self.text_size as u64 && action_end > 0 {
            return bad("action range overlaps the text range");
        }
        if (self.action_offset..action_end as u32).contains(&self.act_marker_id) {
            return bad("act marker lies in the action range");
        }
        if self.action_bos >= self.action_size || self.action_eos >= self.action_size || self.action_bos == self.action_eos {
            return bad("action delimiters must be distinct action-local ids");
        }
        Ok(())
    }

    fn classify(&self, id: u32) -> Class {
        if id < self.text_size {
            Class::Text
        } else if id == self.act_marker_id {
            Class::Act
        } else if id >= self.action_offset && (id - self.action_offset) < self.action_size {
            Class::Action(id - self.action_offset)
        } else {
            Class::Illegal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ids")]
pub enum Segment {
    Text(Vec<u32>),
    /// Action-local ids, from the chunk start through its end symbol.
    Action(ActionTokenSeq),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DemuxError {
    #[error("id {id} at position {pos} is outside every vocabulary range")]
    IllegalId { pos: usize, id: u32 },
    #[error("action id {id} at position {pos} outside an action window")]
    StrayActionToken { pos: usize, id: u32 },
    #[error("action window opened at position {opened} is not terminated")]
    UnterminatedAction { opened: usize },
    #[error("invalid vocabulary layout: {0}")]
    InvalidLayout(String),
}

impl DemuxError {
    pub fn code(&self) -> &'static str {
        match self {
            DemuxError::IllegalId { .. } => "ILLEGAL_ID",
            DemuxError::StrayActionToken { .. } => "STRAY_ACTION_TOKEN",
            DemuxError::UnterminatedAction { .. } => "UNTERMINATED_ACTION",
            DemuxError::InvalidLayout(_) => "INVALID_LAYOUT",
        }
    }
}

pub fn demux(stream: &[u32], layout: &VocabLayout) -> Result<Vec<Segment>, DemuxError> {
    layout.check()?;
    let mut segments = Vec::new();
    let mut text = Vec::new();
    let mut action: Option<(usize, Vec<u32>)> = None;

    for (pos, &id) in stream.iter().enumerate() {
        let class = layout.classify(id);
        if class == Class::Illegal {
            return Err(DemuxError::IllegalId { pos, id });
        }
        match action.as_mut() {
            Some((opened, window)) => match class {
                Class::Action(local) => {
                    window.push(local);
                    if local == layout.action_eos {
                        let (_, window) = action.take().unwrap();
                        segments.push(Segment::Action(ActionTokenSeq(window)));
                    }
                }
                // Anything but an action id ends the window early.
                _ => return Err(DemuxError::UnterminatedAction { opened: *opened }),
            },
            None => match class {
                Class::Text => text.push(id),
                Class::Act => {
                    if !text.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut text)));
                    }
                    action = Some((pos, Vec::new()));
                }
                Class::Action(_) => return Err(DemuxError::StrayActionToken { pos, id }),
                Class::Illegal => unreachable!(),
            },
        }
    }
    if let Some((opened, _)) = action {
        return Err(DemuxError::UnterminatedAction { opened });
    }
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    Ok(segments)
}

/// Inverse of [`demux`]: text ids verbatim, each action segment preceded by
/// the marker and shifted back into the joint range.
pub fn serialize(segments: &[Segment], layout: &VocabLayout) -> Vec<u32> {
    let mut out = Vec::new();
    for seg in segments {
        match seg {
            Segment::Text(ids) => out.extend_from_slice(ids),
            Segment::Action(seq) => {
                out.push(layout.act_marker_id);
                out.extend(seq.0.iter().map(|id| id + layout.action_offset));
            }
        }
    }
    out
}

#[derive(Debug, Error)]
#[error("action segment {segment}: {source}")]
pub struct SegmentDecodeError {
    pub segment: usize,
    #[source]
    pub source: CodecError,
}

/// Decodes every action segment in order. `segment` in an error is the index
/// into `segments`.
pub fn decode_stream_actions(
    segments: &[Segment],
    model: &CodecModel,
) -> Result<Vec<ActionChunk>, SegmentDecodeError> {
    segments
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            Segment::Action(seq) => Some((i, seq)),
            Segment::Text(_) => None,
        })
        .map(|(segment, seq)| model.decode_tokens(seq).map_err(|source| SegmentDecodeError { segment, source }))
        .collect()
}
