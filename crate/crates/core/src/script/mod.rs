//! Textual scripting: trajectory filtering, dialogue synthesis through a
//! chat-completion service, interaction extension and intent validation.

pub mod client;
pub mod filter;
pub mod forge;
pub mod pipeline;
pub mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::markup::MarkupDoc;
use crate::episode::{ActionFrame, Demographic, InstructionType};
use crate::lexicon;

pub use client::{CachedChatClient, ChatClient, ChatClientConfig, ChatRequest, HttpChatClient, ReplayChatClient};
pub use filter::{FilterDecision, TrajectoryFilter};
pub use forge::{extend_interaction, synthesize_dialogue, validate_intent, IntentVerdict};
pub use pipeline::{run_script_stage, ScriptConfig, ScriptOutcome, ScriptRecord};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("chat service error: {0}")]
    ServiceError(String),
    #[error("response schema error: {0}")]
    SchemaError(String),
    #[error("rule violation {code}: {detail}")]
    RuleViolation { code: &'static str, detail: String },
    #[error("final robot turn does not end with [ACT]")]
    MissingActTag,
    #[error("first exchange is not the <conv> placeholder")]
    PlaceholderMissing,
    #[error("template error: {0}")]
    Template(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScriptError {
    pub fn code(&self) -> &'static str {
        match self {
            ScriptError::ServiceError(_) => "SERVICE_ERROR",
            ScriptError::SchemaError(_) => "SCHEMA_ERROR",
            ScriptError::RuleViolation { code, .. } => code,
            ScriptError::MissingActTag => "MISSING_ACT_TAG",
            ScriptError::PlaceholderMissing => "PLACEHOLDER_MISSING",
            ScriptError::Template(_) => "TEMPLATE_ERROR",
            ScriptError::Io(_) => "IO",
        }
    }

    pub(crate) fn rule(code: &'static str, detail: impl Into<String>) -> Self {
        ScriptError::RuleViolation { code, detail: detail.into() }
    }
}

/// A source trajectory as exported from a robot dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeed {
    pub source_id: String,
    pub original_instruction: String,
    pub first_frame_ref: String,
    #[serde(default)]
    pub skill: String,
    #[serde(default)]
    pub objects: Vec<String>,
    /// Dataset name, e.g. `libero_10`.
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub frame_refs: Vec<String>,
    #[serde(default)]
    pub actions: Vec<ActionFrame>,
    /// Set upstream when the visual states carry little information.
    #[serde(default)]
    pub low_information: bool,
}

impl TrajectorySeed {
    pub fn new(source_id: &str, instruction: &str, first_frame_ref: &str) -> Self {
        let mut seed = TrajectorySeed {
            source_id: source_id.to_string(),
            original_instruction: instruction.to_string(),
            first_frame_ref: first_frame_ref.to_string(),
            skill: String::new(),
            objects: Vec::new(),
            source: String::new(),
            frame_refs: vec![first_frame_ref.to_string()],
            actions: Vec::new(),
            low_information: false,
        };
        seed.fill_extraction();
        seed
    }

    /// Fills skill and objects from the instruction when the exporter left them out.
    pub fn fill_extraction(&mut self) {
        if self.skill.is_empty() && self.objects.is_empty() {
            let e = lexicon::extract(&self.original_instruction);
            self.skill = e.skill.unwrap_or_default();
            self.objects = e.objects;
        }
        if self.frame_refs.is_empty() && !self.first_frame_ref.is_empty() {
            self.frame_refs.push(self.first_frame_ref.clone());
        }
    }
}

/// Who a speaker in a draft is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerInfo {
    pub role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographic: Option<Demographic>,
}

impl SpeakerInfo {
    /// Parses strings like `"role: son, name: Alex"` or `"Dad"`.
    pub fn parse(text: &str) -> Self {
        let mut role = None;
        let mut name = None;
        for part in text.split(',') {
            match part.split_once(':') {
                Some((k, v)) if k.trim().eq_ignore_ascii_case("role") => role = Some(v.trim().to_string()),
                Some((k, v)) if k.trim().eq_ignore_ascii_case("name") => name = Some(v.trim().to_string()),
                _ => {}
            }
        }
        let role = role.unwrap_or_else(|| text.trim().to_string());
        SpeakerInfo { demographic: Demographic::from_role(&role), role, name }
    }

    pub fn from_demographic(d: Demographic) -> Self {
        SpeakerInfo { role: d.label(), name: None, demographic: Some(d) }
    }
}

/// A synthesized human-only dialogue, before extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptDraft {
    pub scene_description: String,
    pub conversation: MarkupDoc,
    pub speaker_infos: Vec<SpeakerInfo>,
    pub selected_sound_type: Option<String>,
    pub instruction_type: InstructionType,
}

/// A draft followed by the human-robot follow-up exchanges. The first
/// exchange's user side is the draft itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationPlan {
    pub draft: ScriptDraft,
    /// `(user markup, robot text)`; the first user entry is `<conv>`.
    pub extension_turns: Vec<(String, String)>,
    pub final_robot_turn_has_act: bool,
    /// Draft plus extension as one document.
    pub conversation: MarkupDoc,
}

/// Canonical form for comparing instructions: lowercase, apostrophes dropped,
/// other punctuation turned into spaces, articles removed, whitespace
/// collapsed.
pub fn normalize_intent(text: &str) -> String {
    text.to_lowercase()
        .replace(['\'', '\u{2019}'], "")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{AgeGroup, Gender};

    #[test]
    fn normalization_pairs() {
        assert_eq!(normalize_intent("Move the pot onto the towel."), normalize_intent("move pot onto the towel"));
        assert_ne!(normalize_intent("pick up the apple"), normalize_intent("pick up banana"));
        assert_eq!(normalize_intent("  Put   the bowl's lid  ON!"), "put bowls lid on");
        assert_eq!(normalize_intent("An apple"), "apple");
    }

    #[test]
    fn speaker_info_strings() {
        let s = SpeakerInfo::parse("role: son, name: Alex");
        assert_eq!(s.role, "son");
        assert_eq!(s.name.as_deref(), Some("Alex"));
        assert_eq!(s.demographic, Some(Demographic { gender: Gender::Male, age_group: AgeGroup::Child }));
        assert_eq!(SpeakerInfo::parse("Dad").demographic.unwrap().age_group, AgeGroup::Adult);
    }

    #[test]
    fn seed_extraction() {
        let s = TrajectorySeed::new("t1", "pick up banana", "f.png");
        assert_eq!(s.skill, "pick");
        assert_eq!(s.objects, vec!["banana"]);
    }
}
