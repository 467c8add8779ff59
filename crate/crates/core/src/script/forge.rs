//! Dialogue synthesis, interaction extension and intent validation.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::client::{ChatClient, ChatRequest};
use super::templates::{self, Template};
use super::{normalize_intent, ConversationPlan, ScriptDraft, ScriptError, SpeakerInfo, TrajectorySeed};
use crate::episode::markup::{parse_markup, MarkupDoc, Speaker};
use crate::episode::{Demographic, InstructionType};
use crate::lexicon::tokenize;

/// Sound types offered to the NonVerbal template.
pub const DEFAULT_SOUND_TYPES: [&str; 8] = [
    "doorbell",
    "microwave beep",
    "kettle whistle",
    "phone ringing",
    "dog barking",
    "door closing",
    "water running",
    "alarm clock",
];

/// Words that count as talking about the robot in a human-only draft.
const AGENT_WORDS: [&str; 6] = ["robot", "robots", "agent", "agents", "assistant", "assistants"];

/// Robot reply for DirectText episodes.
pub const DIRECT_TEXT_REPLY: &str = "OK, I will do that. [ACT]";

pub const MIN_EXCHANGES: usize = 2;
pub const MAX_EXCHANGES: usize = 4;
pub const CONV_PLACEHOLDER: &str = "<conv>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum IntentVerdict {
    Pass,
    Fail { inferred: String },
}

impl IntentVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, IntentVerdict::Pass)
    }
}

/// Number of speaker identities a type's template asks for.
pub fn identity_slots(itype: InstructionType) -> usize {
    match itype {
        InstructionType::Identity | InstructionType::Triadic => 3,
        InstructionType::Dyadic => 2,
        _ => 0,
    }
}

/// Pulls the JSON value out of a chat reply, tolerating code fences and
/// chatter around it.
pub fn extract_json(reply: &str) -> Result<Value, ScriptError> {
    let start = reply
        .find(['{', '['])
        .ok_or_else(|| ScriptError::SchemaError("reply contains no JSON".into()))?;
    let close = if reply[start..].starts_with('{') { '}' } else { ']' };
    let end = reply
        .rfind(close)
        .filter(|&e| e > start)
        .ok_or_else(|| ScriptError::SchemaError("reply contains no complete JSON value".into()))?;
    serde_json::from_str(&reply[start..=end]).map_err(|e| ScriptError::SchemaError(format!("invalid JSON: {e}")))
}

fn str_field<'a>(obj: &'a Value, key: &str) -> Result<&'a str, ScriptError> {
    obj.get(key)
        .ok_or_else(|| ScriptError::SchemaError(format!("missing field `{key}`")))?
        .as_str()
        .ok_or_else(|| ScriptError::SchemaError(format!("field `{key}` is not a string")))
}

fn opt_str_field(obj: &Value, key: &str) -> Option<String> {
    obj.get(key).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

fn parse_conversation(text: &str) -> Result<MarkupDoc, ScriptError> {
    parse_markup(text).map_err(|e| ScriptError::SchemaError(format!("conversation markup: {e} ({})", e.code())))
}

fn ask(client: &dyn ChatClient, template: Template, vars: &[(&str, &str)]) -> Result<Value, ScriptError> {
    let prompt = template.fill(vars)?;
    let reply = client.complete(&ChatRequest { template_id: template.id(), prompt })?;
    extract_json(&reply)
}

/// `true` when `needle` occurs in `hay` as a run of whole words.
fn contains_words(hay: &str, needle: &str) -> bool {
    !needle.is_empty() && format!(" {hay} ").contains(&format!(" {needle} "))
}

/// Human text before the robot's first turn.
fn leading_human_text(doc: &MarkupDoc) -> String {
    doc.turns
        .iter()
        .take_while(|t| t.speaker != Speaker::Robot)
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Ambiguity rule: the instruction may not appear word for word in what the
/// humans say before the robot first speaks. NonVerbal drafts state the
/// conditional action openly and DirectText is the instruction itself, so
/// both are exempt.
pub fn check_ambiguity(doc: &MarkupDoc, itype: InstructionType, instruction: &str) -> Result<(), ScriptError> {
    if matches!(itype, InstructionType::NonVerbal | InstructionType::DirectText) {
        return Ok(());
    }
    if contains_words(&normalize_intent(&leading_human_text(doc)), &normalize_intent(instruction)) {
        return Err(ScriptError::rule("INSTRUCTION_VERBATIM", "the instruction is spoken verbatim before the robot joins"));
    }
    Ok(())
}

/// Structural rules every accepted draft obeys.
pub fn check_draft(draft: &ScriptDraft, instruction: &str) -> Result<(), ScriptError> {
    let doc = &draft.conversation;
    let itype = draft.instruction_type;
    if doc.turns.is_empty() {
        return Err(ScriptError::rule("EMPTY_DIALOGUE", "draft has no turns"));
    }
    if doc.act_count() > 0 {
        return Err(ScriptError::rule("UNEXPECTED_ACT", "draft already carries [ACT]"));
    }
    if doc.turns.iter().any(|t| t.speaker == Speaker::Robot) {
        return Err(ScriptError::rule("ROBOT_IN_DRAFT", "draft contains a [Robot] turn"));
    }
    for (k, t) in doc.turns.iter().enumerate() {
        if let Some(w) = tokenize(&t.text).into_iter().find(|w| AGENT_WORDS.contains(&w.as_str())) {
            return Err(ScriptError::rule("AGENT_MENTION", format!("turn {k} mentions `{w}`")));
        }
    }
    let speakers = doc.human_speakers().len();
    let wanted = match itype {
        InstructionType::Identity | InstructionType::Triadic => Some(3),
        InstructionType::Dyadic => Some(2),
        _ => None,
    };
    if let Some(n) = wanted.filter(|&n| n != speakers) {
        return Err(ScriptError::rule("SPEAKER_COUNT", format!("{itype} needs {n} speakers, found {speakers}")));
    }
    match itype {
        InstructionType::Overlapping if doc.overlap_count() == 0 => {
            return Err(ScriptError::rule("NO_OVERLAP", "overlapping draft has no [Overlap] span"));
        }
        InstructionType::NonVerbal => {
            if draft.selected_sound_type.as_deref().is_none_or(|s| s.trim().is_empty()) {
                return Err(ScriptError::rule("NO_SOUND_TYPE", "non-verbal draft names no sound type"));
            }
            if doc.sound_anchor_count() == 0 {
                return Err(ScriptError::rule("NO_SOUND_ANCHOR", "non-verbal draft has no [Sound] anchor"));
            }
        }
        InstructionType::Sentiment if doc.turns.iter().all(|t| t.sentiment_cues.is_empty()) => {
            return Err(ScriptError::rule("NO_SENTIMENT_CUE", "sentiment draft has no [SentimentCue]"));
        }
        _ => {}
    }
    check_ambiguity(doc, itype, instruction)
}

fn identity_text(d: &Demographic) -> String {
    d.label().replace('_', " ")
}

/// Asks the service for a human-only dialogue of the given type.
///
/// `speakers` supplies the identities for Identity (3), Dyadic (2) and
/// Triadic (3) drafts and is ignored otherwise.
pub fn synthesize_dialogue(
    seed: &TrajectorySeed,
    itype: InstructionType,
    speakers: &[Demographic],
    client: &dyn ChatClient,
) -> Result<ScriptDraft, ScriptError> {
    let instruction = seed.original_instruction.trim();
    let Some(template) = templates::dialogue_template(itype) else {
        let draft = ScriptDraft {
            scene_description: String::new(),
            conversation: parse_conversation(&format!("[S1] {instruction}"))?,
            speaker_infos: Vec::new(),
            selected_sound_type: None,
            instruction_type: itype,
        };
        check_draft(&draft, instruction)?;
        return Ok(draft);
    };

    let slots = identity_slots(itype);
    if speakers.len() < slots {
        return Err(ScriptError::Template(format!("{itype} needs {slots} speaker identities, got {}", speakers.len())));
    }
    let identities: Vec<String> = speakers[..slots].iter().map(identity_text).collect();
    let sound_list = DEFAULT_SOUND_TYPES.join(", ");
    let names = ["identity_1", "identity_2", "identity_3"];
    let mut vars: Vec<(&str, &str)> = vec![("instruction", instruction), ("first_frame", &seed.first_frame_ref)];
    if itype == InstructionType::NonVerbal {
        vars.push(("sound_list", &sound_list));
    }
    for (name, value) in names.iter().zip(&identities) {
        vars.push((name, value));
    }

    let obj = ask(client, template, &vars)?;
    if !obj.is_object() {
        return Err(ScriptError::SchemaError("reply is not a JSON object".into()));
    }
    let conversation = parse_conversation(str_field(&obj, "conversation")?)?;
    let selected_sound_type = if itype == InstructionType::NonVerbal {
        Some(str_field(&obj, "selected_sound_type")?.trim().to_string())
    } else {
        None
    };
    let speaker_infos = if slots > 0 {
        speakers[..slots].iter().map(|d| SpeakerInfo::from_demographic(*d)).collect()
    } else {
        ["speaker1_info", "speaker2_info", "speaker3_info"]
            .iter()
            .filter_map(|k| opt_str_field(&obj, k))
            .map(|s| SpeakerInfo::parse(&s))
            .collect()
    };
    let draft = ScriptDraft {
        scene_description: opt_str_field(&obj, "scene_description").unwrap_or_default(),
        conversation,
        speaker_infos,
        selected_sound_type,
        instruction_type: itype,
    };
    check_draft(&draft, instruction)?;
    Ok(draft)
}

fn exchanges(value: &Value) -> Result<Vec<(String, String)>, ScriptError> {
    let list = match value {
        Value::Array(items) => items,
        Value::Object(_) => value
            .get("conversation")
            .and_then(Value::as_array)
            .ok_or_else(|| ScriptError::SchemaError("missing `conversation` list".into()))?,
        _ => return Err(ScriptError::SchemaError("reply is neither a list nor an object".into())),
    };
    list.iter()
        .map(|item| Ok((str_field(item, "user")?.trim().to_string(), str_field(item, "robot")?.trim().to_string())))
        .collect()
}

/// Joins a draft and its follow-up exchanges into one transcript and checks
/// the exchange structure.
pub fn assemble_plan(draft: ScriptDraft, pairs: Vec<(String, String)>) -> Result<ConversationPlan, ScriptError> {
    let min = if draft.instruction_type == InstructionType::DirectText { 1 } else { MIN_EXCHANGES };
    if !(min..=MAX_EXCHANGES).contains(&pairs.len()) {
        return Err(ScriptError::SchemaError(format!(
            "{} exchanges, expected {min} to {MAX_EXCHANGES}",
            pairs.len()
        )));
    }
    if pairs[0].0 != CONV_PLACEHOLDER {
        return Err(ScriptError::PlaceholderMissing);
    }
    let last = pairs.len() - 1;
    if !pairs[last].1.ends_with("[ACT]") {
        return Err(ScriptError::MissingActTag);
    }
    for (i, (user, robot)) in pairs.iter().enumerate() {
        if user.contains("[ACT]") || (i != last && robot.contains("[ACT]")) {
            return Err(ScriptError::SchemaError(format!("exchange {} carries a stray [ACT]", i + 1)));
        }
        if robot.trim_end_matches("[ACT]").trim().is_empty() {
            return Err(ScriptError::SchemaError(format!("exchange {} has an empty robot reply", i + 1)));
        }
        if i > 0 {
            let doc = parse_conversation(user)?;
            if doc.turns.len() != 1 || !doc.turns[0].speaker.is_human() {
                return Err(ScriptError::SchemaError(format!(
                    "exchange {} user side must be one labelled human turn",
                    i + 1
                )));
            }
        }
    }

    let mut text = draft.conversation.to_markup().map_err(|e| ScriptError::SchemaError(e.to_string()))?;
    for (i, (user, robot)) in pairs.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            text.push_str(user);
        }
        text.push_str(" [Robot] ");
        text.push_str(robot);
    }
    let conversation = parse_conversation(&text)?;
    let expected = draft.conversation.turns.len() + 2 * pairs.len() - 1;
    if conversation.turns.len() != expected {
        return Err(ScriptError::SchemaError("robot replies may not contain speaker tags".into()));
    }
    let final_robot_turn_has_act = conversation.turns.last().is_some_and(|t| t.speaker == Speaker::Robot && t.act);
    if !final_robot_turn_has_act || conversation.act_count() != 1 {
        return Err(ScriptError::MissingActTag);
    }
    Ok(ConversationPlan { draft, extension_turns: pairs, final_robot_turn_has_act, conversation })
}

/// Asks the service for the follow-up human-robot exchanges that end in the
/// robot confirming and acting.
pub fn extend_interaction(
    draft: &ScriptDraft,
    instruction: &str,
    client: &dyn ChatClient,
) -> Result<ConversationPlan, ScriptError> {
    if draft.instruction_type == InstructionType::DirectText {
        return assemble_plan(draft.clone(), vec![(CONV_PLACEHOLDER.into(), DIRECT_TEXT_REPLY.into())]);
    }
    let conversation = draft.conversation.to_markup().map_err(|e| ScriptError::SchemaError(e.to_string()))?;
    let value = ask(
        client,
        templates::EXTENSION,
        &[("scene", &draft.scene_description), ("conversation", &conversation), ("instruction", instruction.trim())],
    )?;
    let plan = assemble_plan(draft.clone(), exchanges(&value)?)?;
    check_ambiguity(&plan.conversation, draft.instruction_type, instruction)?;
    Ok(plan)
}

/// Pass iff the intent a judge reads from the transcript matches the
/// original instruction after normalization.
pub fn intent_matches(inferred: &str, original: &str) -> bool {
    let a = normalize_intent(inferred);
    !a.is_empty() && a == normalize_intent(original)
}

/// Has the service infer the instruction from the full transcript.
pub fn validate_intent(
    plan: &ConversationPlan,
    original_instruction: &str,
    client: &dyn ChatClient,
) -> Result<IntentVerdict, ScriptError> {
    let conversation = plan.conversation.to_markup().map_err(|e| ScriptError::SchemaError(e.to_string()))?;
    let value = ask(client, templates::JUDGE, &[("conversation", &conversation)])?;
    let inferred = str_field(&value, "instruction")?.trim().to_string();
    Ok(if intent_matches(&inferred, original_instruction) {
        IntentVerdict::Pass
    } else {
        IntentVerdict::Fail { inferred }
    })
}
