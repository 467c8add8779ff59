//! Transcript markup grammar.
//!
//! A transcript is a sequence of turns, each opened by a speaker tag
//! (`[S1]`, `[S2]`, `[S3]`, `[Robot]`) or by an interrupting tag
//! (`[Overlap_S1]` .. `[Overlap_S3]`). Inside a turn the inline tags
//! `[Overlap]`, `[Sound]`, `[SentimentCue]` and `[ACT]` mark positions in the
//! turn text. Inline tags carry no payload.
//!
//! Positions are counted in `char`s of the turn text, which is the turn body
//! with tags removed and surrounding whitespace trimmed. Rendering is
//! canonical (one space after each opening tag, turns separated by a single
//! space), parsing accepts any amount of whitespace.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Speaker of a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    S1,
    S2,
    S3,
    Robot,
}

impl Speaker {
    pub const HUMANS: [Speaker; 3] = [Speaker::S1, Speaker::S2, Speaker::S3];

    pub fn is_human(self) -> bool {
        self != Speaker::Robot
    }

    /// Zero-based index for human speakers.
    pub fn human_index(self) -> Option<usize> {
        match self {
            Speaker::S1 => Some(0),
            Speaker::S2 => Some(1),
            Speaker::S3 => Some(2),
            Speaker::Robot => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Speaker::S1 => "S1",
            Speaker::S2 => "S2",
            Speaker::S3 => "S3",
            Speaker::Robot => "Robot",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Span of a turn that is talked over by the speaker of the next turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapSpan {
    pub start: usize,
    pub end: usize,
    pub interrupter: Speaker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    /// Turn was opened by `[Overlap_Sx]`, i.e. it talks over the previous turn.
    pub interrupting: bool,
    pub overlap: Option<OverlapSpan>,
    pub sound_anchors: Vec<usize>,
    pub sentiment_cues: Vec<usize>,
    /// Turn ends with `[ACT]`.
    pub act: bool,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Turn {
            speaker,
            text: text.into(),
            interrupting: false,
            overlap: None,
            sound_anchors: Vec::new(),
            sentiment_cues: Vec::new(),
            act: false,
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// Parsed transcript.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkupDoc {
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkupError {
    #[error("unknown tag `[{tag}]` at char {pos}")]
    UnknownTag { tag: String, pos: usize },
    #[error("[Overlap] in turn {turn} is not followed by an [Overlap_Sx] turn")]
    DanglingOverlap { turn: usize },
    #[error("[Overlap_Sx] turn {turn} has no [Overlap] in the preceding turn")]
    OrphanOverlap { turn: usize },
    #[error("turn {turn} interrupts its own speaker")]
    SelfOverlap { turn: usize },
    #[error("turn {turn} has more than one [Overlap]")]
    DuplicateOverlap { turn: usize },
    #[error("[Overlap] in turn {turn} covers no text")]
    EmptyOverlap { turn: usize },
    #[error("[ACT] in turn {turn} is not the final token of a Robot turn")]
    MisplacedAct { turn: usize },
    #[error("more than one [ACT] marker (turn {turn})")]
    MultipleAct { turn: usize },
    #[error("text or tag at char {pos} before the first speaker tag")]
    NoSpeaker { pos: usize },
    #[error("turn {turn} has no text")]
    EmptyTurn { turn: usize },
    #[error("invalid document: {0}")]
    InvalidDoc(String),
}

impl MarkupError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            MarkupError::UnknownTag { .. } => "UNKNOWN_TAG",
            MarkupError::DanglingOverlap { .. } => "DANGLING_OVERLAP",
            MarkupError::OrphanOverlap { .. } => "ORPHAN_OVERLAP",
            MarkupError::SelfOverlap { .. } => "SELF_OVERLAP",
            MarkupError::DuplicateOverlap { .. } => "DUPLICATE_OVERLAP",
            MarkupError::EmptyOverlap { .. } => "EMPTY_OVERLAP",
            MarkupError::MisplacedAct { .. } => "MISPLACED_ACT",
            MarkupError::MultipleAct { .. } => "ACT_MULTIPLICITY",
            MarkupError::NoSpeaker { .. } => "NO_SPEAKER",
            MarkupError::EmptyTurn { .. } => "EMPTY_TURN",
            MarkupError::InvalidDoc(_) => "INVALID_DOC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Speaker(Speaker),
    Interrupt(Speaker),
    Overlap,
    Sound,
    SentimentCue,
    Act,
}

impl Tag {
    fn from_name(name: &str) -> Option<Tag> {
        Some(match name {
            "S1" => Tag::Speaker(Speaker::S1),
            "S2" => Tag::Speaker(Speaker::S2),
            "S3" => Tag::Speaker(Speaker::S3),
            "Robot" => Tag::Speaker(Speaker::Robot),
            "Overlap_S1" => Tag::Interrupt(Speaker::S1),
            "Overlap_S2" => Tag::Interrupt(Speaker::S2),
            "Overlap_S3" => Tag::Interrupt(Speaker::S3),
            "Overlap" => Tag::Overlap,
            "Sound" => Tag::Sound,
            "SentimentCue" => Tag::SentimentCue,
            "ACT" => Tag::Act,
            _ => return None,
        })
    }
}

/// Inline marker kinds in canonical order for markers sharing a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Inline {
    Overlap,
    SentimentCue,
    Sound,
}

impl Inline {
    fn text(self) -> &'static str {
        match self {
            Inline::Overlap => "[Overlap]",
            Inline::SentimentCue => "[SentimentCue]",
            Inline::Sound => "[Sound]",
        }
    }
}

/// Turn under construction: raw body chars and marker positions into them.
struct RawTurn {
    speaker: Speaker,
    interrupting: bool,
    body: Vec<char>,
    overlap: Option<usize>,
    sounds: Vec<usize>,
    cues: Vec<usize>,
    act: bool,
}

impl RawTurn {
    fn new(speaker: Speaker, interrupting: bool) -> Self {
        RawTurn {
            speaker,
            interrupting,
            body: Vec::new(),
            overlap: None,
            sounds: Vec::new(),
            cues: Vec::new(),
            act: false,
        }
    }

    fn finish(self, index: usize) -> Result<(Turn, Option<usize>), MarkupError> {
        let lead = self.body.iter().take_while(|c| c.is_whitespace()).count();
        let trail = self.body[lead..]
            .iter()
            .rev()
            .take_while(|c| c.is_whitespace())
            .count();
        let len = self.body.len() - lead - trail;
        if len == 0 {
            return Err(MarkupError::EmptyTurn { turn: index });
        }
        let text: String = self.body[lead..lead + len].iter().collect();
        let clamp = |p: usize| p.saturating_sub(lead).min(len);
        let overlap_start = self.overlap.map(clamp);
        if overlap_start == Some(len) {
            return Err(MarkupError::EmptyOverlap { turn: index });
        }
        let turn = Turn {
            speaker: self.speaker,
            text,
            interrupting: self.interrupting,
            overlap: None,
            sound_anchors: self.sounds.into_iter().map(clamp).collect(),
            sentiment_cues: self.cues.into_iter().map(clamp).collect(),
            act: self.act,
        };
        Ok((turn, overlap_start))
    }
}

/// Parses transcript markup into a [`MarkupDoc`].
pub fn parse_markup(text: &str) -> Result<MarkupDoc, MarkupError> {
    let chars: Vec<char> = text.chars().collect();
    let mut turns: Vec<Turn> = Vec::new();
    // Start of the [Overlap] span of the last finished turn, awaiting its interrupter.
    let mut pending_overlap: Option<usize> = None;
    let mut current: Option<RawTurn> = None;
    let mut act_seen = false;
    // Set once [ACT] closes the current turn: only whitespace may follow.
    let mut act_closed = false;

    let finish = |raw: RawTurn,
                      turns: &mut Vec<Turn>,
                      pending: &mut Option<usize>|
     -> Result<(), MarkupError> {
        let index = turns.len();
        let (turn, overlap) = raw.finish(index)?;
        turns.push(turn);
        *pending = overlap;
        Ok(())
    };

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c != '[' {
            match current.as_mut() {
                Some(raw) => {
                    if act_closed && !c.is_whitespace() {
                        return Err(MarkupError::MisplacedAct { turn: turns.len() });
                    }
                    raw.body.push(c);
                }
                None if c.is_whitespace() => {}
                None => return Err(MarkupError::NoSpeaker { pos: i }),
            }
            i += 1;
            continue;
        }

        let close = chars[i + 1..]
            .iter()
            .position(|&c| c == ']' || c == '[')
            .map(|off| i + 1 + off);
        let (name, next) = match close {
            Some(j) if chars[j] == ']' => (chars[i + 1..j].iter().collect::<String>(), j + 1),
            Some(j) => (chars[i + 1..j].iter().collect::<String>(), j),
            None => (chars[i + 1..].iter().collect::<String>(), chars.len()),
        };
        let tag = match (close.map(|j| chars[j]), Tag::from_name(&name)) {
            (Some(']'), Some(tag)) => tag,
            _ => return Err(MarkupError::UnknownTag { tag: name, pos: i }),
        };
        let tag_pos = i;
        i = next;

        match tag {
            Tag::Speaker(speaker) | Tag::Interrupt(speaker) => {
                let interrupting = matches!(tag, Tag::Interrupt(_));
                if let Some(raw) = current.take() {
                    finish(raw, &mut turns, &mut pending_overlap)?;
                }
                let index = turns.len();
                match (pending_overlap.take(), interrupting) {
                    (Some(start), true) => {
                        let prev = turns.last_mut().expect("pending overlap implies a turn");
                        if prev.speaker == speaker {
                            return Err(MarkupError::SelfOverlap { turn: index });
                        }
                        prev.overlap = Some(OverlapSpan {
                            start,
                            end: prev.char_len(),
                            interrupter: speaker,
                        });
                    }
                    (Some(_), false) => {
                        return Err(MarkupError::DanglingOverlap { turn: index - 1 })
                    }
                    (None, true) => return Err(MarkupError::OrphanOverlap { turn: index }),
                    (None, false) => {}
                }
                current = Some(RawTurn::new(speaker, interrupting));
                act_closed = false;
            }
            inline => {
                let index = turns.len();
                let raw = current
                    .as_mut()
                    .ok_or(MarkupError::NoSpeaker { pos: tag_pos })?;
                if act_closed {
                    return Err(MarkupError::MisplacedAct { turn: index });
                }
                let pos = raw.body.len();
                match inline {
                    Tag::Overlap => {
                        if raw.overlap.is_some() {
                            return Err(MarkupError::DuplicateOverlap { turn: index });
                        }
                        raw.overlap = Some(pos);
                    }
                    Tag::Sound => raw.sounds.push(pos),
                    Tag::SentimentCue => raw.cues.push(pos),
                    Tag::Act => {
                        if raw.speaker != Speaker::Robot {
                            return Err(MarkupError::MisplacedAct { turn: index });
                        }
                        if act_seen {
                            return Err(MarkupError::MultipleAct { turn: index });
                        }
                        act_seen = true;
                        act_closed = true;
                        raw.act = true;
                    }
                    Tag::Speaker(_) | Tag::Interrupt(_) => unreachable!(),
                }
            }
        }
    }

    if let Some(raw) = current.take() {
        finish(raw, &mut turns, &mut pending_overlap)?;
    }
    if pending_overlap.is_some() {
        return Err(MarkupError::DanglingOverlap {
            turn: turns.len() - 1,
        });
    }
    Ok(MarkupDoc { turns })
}

/// Renders a document to canonical markup.
pub fn render_markup(doc: &MarkupDoc) -> Result<String, MarkupError> {
    doc.check()?;
    let mut out = String::new();
    for (k, turn) in doc.turns.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        if turn.interrupting {
            out.push_str("[Overlap_");
            out.push_str(turn.speaker.tag());
            out.push_str("] ");
        } else {
            out.push('[');
            out.push_str(turn.speaker.tag());
            out.push_str("] ");
        }

        let mut markers: Vec<(usize, Inline)> = Vec::new();
        if let Some(span) = turn.overlap {
            markers.push((span.start, Inline::Overlap));
        }
        markers.extend(turn.sentiment_cues.iter().map(|&p| (p, Inline::SentimentCue)));
        markers.extend(turn.sound_anchors.iter().map(|&p| (p, Inline::Sound)));
        markers.sort();

        let chars: Vec<char> = turn.text.chars().collect();
        let len = chars.len();
        let mut next = markers.iter().peekable();
        let mut leading = false;
        while let Some(&&(p, m)) = next.peek() {
            if p != 0 {
                break;
            }
            out.push_str(m.text());
            leading = true;
            next.next();
        }
        if leading {
            out.push(' ');
        }
        for (idx, ch) in chars.iter().enumerate() {
            while let Some(&&(p, m)) = next.peek() {
                if p != idx {
                    break;
                }
                out.push_str(m.text());
                next.next();
            }
            out.push(*ch);
        }
        for &(p, m) in next {
            debug_assert_eq!(p, len);
            out.push(' ');
            out.push_str(m.text());
        }
        if turn.act {
            out.push_str(" [ACT]");
        }
    }
    Ok(out)
}

impl MarkupDoc {
    /// Checks every document invariant; the canonical rendering of a document
    /// that passes re-parses to an equal document.
    pub fn check(&self) -> Result<(), MarkupError> {
        let invalid = |k: usize, what: &str| MarkupError::InvalidDoc(format!("turn {k}: {what}"));
        let mut acts = 0;
        for (k, turn) in self.turns.iter().enumerate() {
            let len = turn.char_len();
            if len == 0 {
                return Err(MarkupError::EmptyTurn { turn: k });
            }
            if turn.text.contains('[') {
                return Err(invalid(k, "text contains `[`"));
            }
            let first = turn.text.chars().next().unwrap();
            let last = turn.text.chars().next_back().unwrap();
            if first.is_whitespace() || last.is_whitespace() {
                return Err(invalid(k, "text is not trimmed"));
            }
            if turn.sound_anchors.iter().chain(&turn.sentiment_cues).any(|&p| p > len) {
                return Err(invalid(k, "anchor outside text"));
            }
            if !is_sorted(&turn.sound_anchors) || !is_sorted(&turn.sentiment_cues) {
                return Err(invalid(k, "anchors out of order"));
            }
            if let Some(span) = turn.overlap {
                if span.start >= span.end {
                    return Err(MarkupError::EmptyOverlap { turn: k });
                }
                if span.end != len {
                    return Err(invalid(k, "overlap span must run to the end of the turn"));
                }
                if span.interrupter == turn.speaker {
                    return Err(MarkupError::SelfOverlap { turn: k + 1 });
                }
                match self.turns.get(k + 1) {
                    Some(next) if next.interrupting && next.speaker == span.interrupter => {}
                    _ => return Err(MarkupError::DanglingOverlap { turn: k }),
                }
            }
            if turn.interrupting {
                if !turn.speaker.is_human() {
                    return Err(invalid(k, "Robot cannot interrupt"));
                }
                let prev_ok = k > 0
                    && self.turns[k - 1]
                        .overlap
                        .is_some_and(|s| s.interrupter == turn.speaker);
                if !prev_ok {
                    return Err(MarkupError::OrphanOverlap { turn: k });
                }
            }
            if turn.act {
                if turn.speaker != Speaker::Robot {
                    return Err(MarkupError::MisplacedAct { turn: k });
                }
                acts += 1;
                if acts > 1 {
                    return Err(MarkupError::MultipleAct { turn: k });
                }
            }
        }
        Ok(())
    }

    /// Index of the first turn carrying `[ACT]`.
    pub fn act_turn(&self) -> Option<usize> {
        self.turns.iter().position(|t| t.act)
    }

    pub fn act_count(&self) -> usize {
        self.turns.iter().filter(|t| t.act).count()
    }

    /// Distinct human speakers in order of first appearance.
    pub fn human_speakers(&self) -> Vec<Speaker> {
        let mut seen = Vec::new();
        for t in &self.turns {
            if t.speaker.is_human() && !seen.contains(&t.speaker) {
                seen.push(t.speaker);
            }
        }
        seen
    }

    pub fn overlap_count(&self) -> usize {
        self.turns.iter().filter(|t| t.overlap.is_some()).count()
    }

    pub fn sound_anchor_count(&self) -> usize {
        self.turns.iter().map(|t| t.sound_anchors.len()).sum()
    }

    /// `(turn, char position)` of every `[Sound]` anchor in document order.
    pub fn sound_anchors(&self) -> Vec<(usize, usize)> {
        self.turns
            .iter()
            .enumerate()
            .flat_map(|(k, t)| t.sound_anchors.iter().map(move |&p| (k, p)))
            .collect()
    }

    pub fn to_markup(&self) -> Result<String, MarkupError> {
        render_markup(self)
    }
}

fn is_sorted(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

impl std::str::FromStr for MarkupDoc {
    type Err = MarkupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_markup(s)
    }
}

impl Serialize for MarkupDoc {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let text = render_markup(self).map_err(serde::ser::Error::custom)?;
        serializer.serialize_str(&text)
    }
}

impl<'de> Deserialize<'de> for MarkupDoc {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_markup(&text).map_err(serde::de::Error::custom)
    }
}
