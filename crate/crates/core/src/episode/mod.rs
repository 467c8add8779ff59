//! Episode data model and schema validation.
//!
//! An episode is one (conversation, observations, actions) triplet plus the
//! speaker, mixing and provenance metadata needed to audit it. Manifest lines
//! are the JSON serialization of [`Episode`]; field names are frozen.

pub mod markup;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use markup::{MarkupDoc, OverlapSpan, Speaker, Turn};

/// Number of components of one delta end-effector action.
pub const ACTION_DIM: usize = 7;

/// Contextual instruction type of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionType {
    Sentiment,
    Overlapping,
    NonVerbal,
    Identity,
    Dyadic,
    Triadic,
    /// Single-person text instructions kept to preserve plain command following.
    DirectText,
}

impl InstructionType {
    pub const ALL: [InstructionType; 7] = [
        InstructionType::Sentiment,
        InstructionType::Overlapping,
        InstructionType::NonVerbal,
        InstructionType::Identity,
        InstructionType::Dyadic,
        InstructionType::Triadic,
        InstructionType::DirectText,
    ];

    /// The six dialogue-based types.
    pub const CONTEXTUAL: [InstructionType; 6] = [
        InstructionType::Sentiment,
        InstructionType::Overlapping,
        InstructionType::NonVerbal,
        InstructionType::Identity,
        InstructionType::Dyadic,
        InstructionType::Triadic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InstructionType::Sentiment => "sentiment",
            InstructionType::Overlapping => "overlapping",
            InstructionType::NonVerbal => "non_verbal",
            InstructionType::Identity => "identity",
            InstructionType::Dyadic => "dyadic",
            InstructionType::Triadic => "triadic",
            InstructionType::DirectText => "direct_text",
        }
    }
}

impl fmt::Display for InstructionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstructionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        InstructionType::ALL
            .into_iter()
            .find(|t| t.as_str() == key || (key == "nonverbal" && *t == InstructionType::NonVerbal))
            .ok_or_else(|| format!("unknown instruction type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Child,
    Adult,
    Senior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
}

/// One of the six (gender, age group) categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Demographic {
    pub gender: Gender,
    pub age_group: AgeGroup,
}

impl Demographic {
    pub const ALL: [Demographic; 6] = [
        Demographic { gender: Gender::Male, age_group: AgeGroup::Senior },
        Demographic { gender: Gender::Female, age_group: AgeGroup::Senior },
        Demographic { gender: Gender::Male, age_group: AgeGroup::Adult },
        Demographic { gender: Gender::Female, age_group: AgeGroup::Adult },
        Demographic { gender: Gender::Male, age_group: AgeGroup::Child },
        Demographic { gender: Gender::Female, age_group: AgeGroup::Child },
    ];

    /// Label such as `female_adult`.
    pub fn label(self) -> String {
        let g = match self.gender {
            Gender::Male => "male",
            Gender::Female => "female",
        };
        let a = match self.age_group {
            AgeGroup::Child => "child",
            AgeGroup::Adult => "adult",
            AgeGroup::Senior => "senior",
        };
        format!("{g}_{a}")
    }

    /// Best-effort reading of a free-form role or identity string
    /// (`"dad"`, `"role: son, name: Alex"`, `"female_senior"`).
    pub fn from_role(role: &str) -> Option<Demographic> {
        let lower = role.to_ascii_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let has = |ws: &[&str]| words.iter().any(|w| ws.contains(w));
        let gender = if has(&["female", "mom", "mother", "mum", "mommy", "daughter", "grandma", "grandmother", "granny", "girl", "sister", "wife", "aunt", "woman"]) {
            Gender::Female
        } else if has(&["male", "dad", "father", "son", "grandpa", "grandfather", "boy", "brother", "husband", "uncle", "man"]) {
            Gender::Male
        } else {
            return None;
        };
        let age_group = if has(&["senior", "grandpa", "grandma", "grandfather", "grandmother", "granny", "elderly"]) {
            AgeGroup::Senior
        } else if has(&["child", "son", "daughter", "boy", "girl", "kid", "teenager"]) {
            AgeGroup::Child
        } else {
            AgeGroup::Adult
        };
        Some(Demographic { gender, age_group })
    }
}

/// A voice available for timbre cloning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub id: String,
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub timbre_ref: String,
}

impl SpeakerProfile {
    pub fn demographic(&self) -> Demographic {
        Demographic { gender: self.gender, age_group: self.age_group }
    }
}

/// One delta end-effector control vector. Kept as a plain vector so that
/// malformed rows survive deserialization and show up in validation reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionFrame(pub Vec<f64>);

impl ActionFrame {
    pub fn new(values: [f64; ACTION_DIM]) -> Self {
        ActionFrame(values.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertMode {
    GapInsert,
    Overlay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInsertion {
    /// Index into the document-ordered list of `[Sound]` anchors.
    pub anchor_index: usize,
    pub clip_id: String,
    pub mode: InsertMode,
}

/// How an episode's audio was mixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub background_id: Option<String>,
    pub target_snr_db: f64,
    pub event_insertions: Vec<EventInsertion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub trajectory_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub instruction_type: InstructionType,
    pub original_instruction: String,
    pub conversation: MarkupDoc,
    pub audio_ref: String,
    pub frame_refs: Vec<String>,
    pub actions: Vec<ActionFrame>,
    pub speakers: Vec<SpeakerProfile>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_plan: Option<MixPlan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: String,
    pub detail: String,
}

/// Every invariant an episode violates; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, code: &str) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    fn push(&mut self, code: &str, detail: impl Into<String>) {
        self.issues.push(Issue { code: code.to_string(), detail: detail.into() });
    }
}

/// Checks an episode against the data-model invariants. Filesystem checks
/// (whether referenced files exist) belong to the dataset checker.
pub fn validate_episode(e: &Episode) -> ValidationReport {
    let mut report = ValidationReport::default();
    if e.id.trim().is_empty() {
        report.push("EMPTY_ID", "episode id is empty");
    }
    if e.original_instruction.trim().is_empty() {
        report.push("EMPTY_INSTRUCTION", "original instruction is empty");
    }
    if e.actions.is_empty() {
        report.push("ACTIONS_EMPTY", "action trajectory is empty");
    }
    for (t, frame) in e.actions.iter().enumerate() {
        if frame.0.len() != ACTION_DIM {
            report.push(
                "ACTION_DIM",
                format!("action {t} has {} components, expected {ACTION_DIM}", frame.0.len()),
            );
        } else if frame.0.iter().any(|v| !v.is_finite()) {
            report.push("ACTION_NONFINITE", format!("action {t} has a non-finite component"));
        } else if frame.0.iter().any(|v| v.abs() > 1.0) {
            report.push("ACTION_RANGE", format!("action {t} leaves [-1, 1]"));
        }
    }
    if e.frame_refs.is_empty() {
        report.push("FRAMES_EMPTY", "no visual frame references");
    }
    if e.audio_ref.trim().is_empty() {
        report.push("AUDIO_REF_EMPTY", "audio reference is empty");
    }

    let acts = e.conversation.act_count();
    if acts != 1 {
        report.push("ACT_MULTIPLICITY", format!("conversation has {acts} [ACT] markers, expected 1"));
    }
    if let Err(err) = e.conversation.check() {
        // ACT_MULTIPLICITY already covers this one.
        if !matches!(err, markup::MarkupError::MultipleAct { .. }) {
            report.push("MARKUP_INVALID", format!("{} ({})", err, err.code()));
        }
    }

    let humans = e.conversation.human_speakers();
    let needed = humans
        .iter()
        .filter_map(|s| s.human_index())
        .max()
        .map_or(0, |i| i + 1);
    if e.speakers.len() < needed {
        report.push(
            "SPEAKERS_MISSING",
            format!("conversation uses {needed} speaker slots but {} profiles given", e.speakers.len()),
        );
    }

    if let Some(plan) = &e.mix_plan {
        if !plan.target_snr_db.is_finite() {
            report.push("MIX_SNR", "target SNR is not finite");
        }
        let anchors = e.conversation.sound_anchor_count();
        for ins in &plan.event_insertions {
            if ins.anchor_index >= anchors {
                report.push(
                    "MIX_ANCHOR",
                    format!("event anchor {} but conversation has {anchors} [Sound] anchors", ins.anchor_index),
                );
            }
        }
    }
    report
}
