use forge_core::episode::{Demographic, InstructionType};
use forge_core::script::forge::{check_draft, DEFAULT_SOUND_TYPES};
use forge_core::script::{
    extend_interaction, normalize_intent, run_script_stage, synthesize_dialogue, validate_intent, CachedChatClient,
    ChatClient, IntentVerdict, ReplayChatClient, ScriptConfig, ScriptDraft, TrajectorySeed,
};
use forge_core::{cache::BlobCache, parse_markup, Speaker};
use proptest::prelude::*;
use serde_json::json;

const POT: &str = "move the pot onto the towel";

fn dyadic_draft_json() -> String {
    json!({
        "conversation": "[S1] Oh, look at that pot sitting there. [S2] Yeah, it's right next to the towel. \
             [S1] Hmm, if we move it onto the towel, it'll be easier to clean later. [S2] Good idea, let me handle that."
    })
    .to_string()
}

fn two_adults() -> Vec<Demographic> {
    vec![Demographic::ALL[2], Demographic::ALL[3]]
}

fn pot_seed() -> TrajectorySeed {
    TrajectorySeed::new("libero-pot", POT, "frames/pot/0.png")
}

#[test]
fn dyadic_example_becomes_two_speaker_draft() {
    let client = ReplayChatClient::constant(dyadic_draft_json());
    let draft = synthesize_dialogue(&pot_seed(), InstructionType::Dyadic, &two_adults(), &client).unwrap();
    assert_eq!(draft.instruction_type, InstructionType::Dyadic);
    assert_eq!(draft.conversation.human_speakers(), vec![Speaker::S1, Speaker::S2]);
    assert_eq!(draft.speaker_infos.len(), 2);
    assert_eq!(draft.conversation.act_count(), 0);
}

#[test]
fn non_json_reply_is_schema_error() {
    let client = ReplayChatClient::constant("Sure! Here is a lovely conversation about pots.");
    let err = synthesize_dialogue(&pot_seed(), InstructionType::Dyadic, &two_adults(), &client).unwrap_err();
    assert_eq!(err.code(), "SCHEMA_ERROR");
    let client = ReplayChatClient::constant(r#"{"scene_description": "kitchen"}"#);
    let err = synthesize_dialogue(&pot_seed(), InstructionType::Dyadic, &two_adults(), &client).unwrap_err();
    assert_eq!(err.code(), "SCHEMA_ERROR");
}

#[test]
fn identity_dialogue_mentioning_robot_is_rule_violation() {
    let reply = json!({
        "conversation": "[S1] Grandpa, the drawer is stuck. [S2] Let the robot open it for you. [S3] Top one first, please."
    });
    let client = ReplayChatClient::constant(reply.to_string());
    let three = &Demographic::ALL[..3];
    let err = synthesize_dialogue(
        &TrajectorySeed::new("d", "open the top drawer", "f.png"),
        InstructionType::Identity,
        three,
        &client,
    )
    .unwrap_err();
    assert_eq!(err.code(), "AGENT_MENTION");
    assert!(matches!(err, forge_core::script::ScriptError::RuleViolation { .. }));
}

fn draft() -> ScriptDraft {
    let client = ReplayChatClient::constant(dyadic_draft_json());
    synthesize_dialogue(&pot_seed(), InstructionType::Dyadic, &two_adults(), &client).unwrap()
}

#[test]
fn extension_example_gives_valid_plan() {
    let reply = json!([
        {"user": "<conv>", "robot": "Do you need me to move the pot onto the towel?"},
        {"user": "[S2] Uh, yeah, that'd be great.", "robot": "Alright, I will move the pot onto the towel now. [ACT]"}
    ]);
    let plan = extend_interaction(&draft(), POT, &ReplayChatClient::constant(reply.to_string())).unwrap();
    assert_eq!(plan.extension_turns[0].0, "<conv>");
    assert_eq!(plan.extension_turns.len(), 2);
    assert!(plan.final_robot_turn_has_act);
    let doc = &plan.conversation;
    assert_eq!(doc.turns.len(), 4 + 3);
    assert_eq!(doc.act_turn(), Some(6));
    assert_eq!(doc.turns[4].speaker, Speaker::Robot);
    // The plan's transcript is a valid episode conversation.
    let text = doc.to_markup().unwrap();
    assert_eq!(&parse_markup(&text).unwrap(), doc);
}

#[test]
fn extension_object_form_is_accepted() {
    let reply = json!({"conversation": [
        {"user": "<conv>", "robot": "Should I put it on the towel?"},
        {"user": "[S1] Yes please.", "robot": "OK, I will do that. [ACT]"}
    ]});
    assert!(extend_interaction(&draft(), POT, &ReplayChatClient::constant(reply.to_string())).is_ok());
}

#[test]
fn extension_failures() {
    let missing_act = json!([
        {"user": "<conv>", "robot": "Do you need me to move the pot?"},
        {"user": "[S2] Yes.", "robot": "Alright, moving it now."}
    ]);
    let err = extend_interaction(&draft(), POT, &ReplayChatClient::constant(missing_act.to_string())).unwrap_err();
    assert_eq!(err.code(), "MISSING_ACT_TAG");

    let mut six = vec![json!({"user": "<conv>", "robot": "Should I help?"})];
    for _ in 0..4 {
        six.push(json!({"user": "[S1] Hmm.", "robot": "Should I help?"}));
    }
    six.push(json!({"user": "[S1] Yes.", "robot": "OK. [ACT]"}));
    let err = extend_interaction(&draft(), POT, &ReplayChatClient::constant(json!(six).to_string())).unwrap_err();
    assert_eq!(err.code(), "SCHEMA_ERROR");

    let no_placeholder = json!([
        {"user": "[S1] Hi", "robot": "Should I move it?"},
        {"user": "[S1] Yes.", "robot": "OK. [ACT]"}
    ]);
    let err = extend_interaction(&draft(), POT, &ReplayChatClient::constant(no_placeholder.to_string())).unwrap_err();
    assert_eq!(err.code(), "PLACEHOLDER_MISSING");

    let stray = json!([
        {"user": "<conv>", "robot": "Doing it. [ACT]"},
        {"user": "[S1] Yes.", "robot": "OK. [ACT]"}
    ]);
    let err = extend_interaction(&draft(), POT, &ReplayChatClient::constant(stray.to_string())).unwrap_err();
    assert_eq!(err.code(), "SCHEMA_ERROR");

    let two_turns = json!([
        {"user": "<conv>", "robot": "Should I move it?"},
        {"user": "[S1] Yes. [S2] Sure.", "robot": "OK. [ACT]"}
    ]);
    let err = extend_interaction(&draft(), POT, &ReplayChatClient::constant(two_turns.to_string())).unwrap_err();
    assert_eq!(err.code(), "SCHEMA_ERROR");
}

fn plan() -> forge_core::script::ConversationPlan {
    let reply = json!([
        {"user": "<conv>", "robot": "Do you need me to move the pot onto the towel?"},
        {"user": "[S2] Yes.", "robot": "OK, I will do that. [ACT]"}
    ]);
    extend_interaction(&draft(), POT, &ReplayChatClient::constant(reply.to_string())).unwrap()
}

#[test]
fn judge_verdicts() {
    let judge = |s: &str| ReplayChatClient::constant(json!({ "instruction": s }).to_string());
    let p = plan();
    assert_eq!(validate_intent(&p, "move pot onto the towel", &judge("Move the pot onto the towel.")).unwrap(), IntentVerdict::Pass);
    assert_eq!(
        validate_intent(&p, "pick up banana", &judge("pick up the apple")).unwrap(),
        IntentVerdict::Fail { inferred: "pick up the apple".into() }
    );
    assert!(validate_intent(&p, POT, &judge(POT)).unwrap().is_pass());
    assert_eq!(validate_intent(&p, POT, &ReplayChatClient::constant("no idea")).unwrap_err().code(), "SCHEMA_ERROR");
    assert_eq!(validate_intent(&p, POT, &ReplayChatClient::default()).unwrap_err().code(), "SERVICE_ERROR");
}

#[test]
fn verbatim_instruction_in_draft_is_rejected() {
    let reply = json!({"conversation": "[S1] We should move the pot onto the towel. [S2] Sure thing."});
    let err = synthesize_dialogue(&pot_seed(), InstructionType::Dyadic, &two_adults(), &ReplayChatClient::constant(reply.to_string()))
        .unwrap_err();
    assert_eq!(err.code(), "INSTRUCTION_VERBATIM");
}

#[test]
fn per_type_rules() {
    let seed = pot_seed();
    let run = |itype, reply: serde_json::Value| {
        let speakers = &Demographic::ALL[..3];
        synthesize_dialogue(&seed, itype, speakers, &ReplayChatClient::constant(reply.to_string())).map(|_| ())
    };
    let code = |r: Result<(), forge_core::script::ScriptError>| r.unwrap_err().code();
    assert_eq!(code(run(InstructionType::Triadic, json!({"conversation": "[S1] a b. [S2] c d."}))), "SPEAKER_COUNT");
    assert_eq!(code(run(InstructionType::Overlapping, json!({"conversation": "[S1] a b. [S2] c d."}))), "NO_OVERLAP");
    assert_eq!(
        code(run(InstructionType::Sentiment, json!({"conversation": "[S1] a b. [S2] c d."}))),
        "NO_SENTIMENT_CUE"
    );
    assert_eq!(
        code(run(InstructionType::NonVerbal, json!({"conversation": "[S1] a [Sound] b. [S2] c d.", "selected_sound_type": " "}))),
        "NO_SOUND_TYPE"
    );
    assert_eq!(
        code(run(InstructionType::NonVerbal, json!({"conversation": "[S1] a b. [S2] c d.", "selected_sound_type": "doorbell"}))),
        "NO_SOUND_ANCHOR"
    );
    assert_eq!(
        code(run(InstructionType::NonVerbal, json!({"conversation": "[S1] a b."}))),
        "SCHEMA_ERROR"
    );
    assert_eq!(code(run(InstructionType::Dyadic, json!({"conversation": "[S1] a. [Robot] b."}))), "ROBOT_IN_DRAFT");
    assert!(run(
        InstructionType::Overlapping,
        json!({"conversation": "[S1] the pan or [Overlap] the pot? [Overlap_S2] Pot! [S1] Fine.", "speaker1_info": "role: mom, name: Ann"})
    )
    .is_ok());
}

#[test]
fn direct_text_needs_no_service() {
    let seed = TrajectorySeed::new("t", "pick up the black bowl", "f.png");
    let none = ReplayChatClient::default();
    let d = synthesize_dialogue(&seed, InstructionType::DirectText, &[], &none).unwrap();
    let p = extend_interaction(&d, &seed.original_instruction, &none).unwrap();
    assert_eq!(p.conversation.to_markup().unwrap(), "[S1] pick up the black bowl [Robot] OK, I will do that. [ACT]");
}

fn speaker_tags(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // Whatever the service returns, an accepted draft obeys its type's rules.
    #[test]
    fn accepted_drafts_obey_rules(
        type_index in 0usize..6,
        speakers in speaker_tags(3),
        overlap in any::<bool>(),
        sound in any::<bool>(),
        cue in any::<bool>(),
        sound_type in prop::option::of(0usize..8),
        mention in any::<bool>(),
        verbatim in any::<bool>(),
    ) {
        let itype = InstructionType::CONTEXTUAL[type_index];
        let mut text = String::new();
        for (k, s) in speakers.iter().enumerate() {
            let mut body = format!("line {k} about the dishes");
            if k == 0 && overlap && speakers.len() > 1 {
                body.push_str(" [Overlap] and more");
            }
            if k == 0 && sound { body.push_str(" [Sound]"); }
            if k == speakers.len() - 1 && cue { body.insert_str(0, "[SentimentCue] "); }
            if k == 0 && mention { body.push_str(" ask the assistant"); }
            if k == 0 && verbatim { body.push_str(&format!(" {POT}")); }
            let tag = if k > 0 && k == 1 && overlap && speakers.len() > 1 { format!("[Overlap_S{}]", s + 1) } else { format!("[S{}]", s + 1) };
            text.push_str(&format!("{tag} {body} "));
        }
        let mut reply = json!({"conversation": text.trim()});
        if let Some(i) = sound_type { reply["selected_sound_type"] = json!(DEFAULT_SOUND_TYPES[i]); }
        let client = ReplayChatClient::constant(reply.to_string());
        if let Ok(d) = synthesize_dialogue(&pot_seed(), itype, &Demographic::ALL[..3], &client) {
            let doc = &d.conversation;
            let n = doc.human_speakers().len();
            match itype {
                InstructionType::Identity | InstructionType::Triadic => prop_assert_eq!(n, 3),
                InstructionType::Dyadic => prop_assert_eq!(n, 2),
                InstructionType::Overlapping => prop_assert!(doc.overlap_count() >= 1),
                InstructionType::NonVerbal => {
                    prop_assert!(d.selected_sound_type.is_some());
                    prop_assert!(doc.sound_anchor_count() >= 1);
                }
                InstructionType::Sentiment => prop_assert!(doc.turns.iter().any(|t| !t.sentiment_cues.is_empty())),
                InstructionType::DirectText => unreachable!(),
            }
            prop_assert_eq!(doc.act_count(), 0);
            let words = normalize_intent(&doc.turns.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "));
            prop_assert!(!words.split(' ').any(|w| w == "assistant"));
            if itype != InstructionType::NonVerbal {
                prop_assert!(!words.contains(&normalize_intent(POT)));
            }
            prop_assert!(check_draft(&d, POT).is_ok());
        }
    }
}

fn stage_client() -> ReplayChatClient {
    let mut c = ReplayChatClient::default();
    c.push("judge", "", json!({"instruction": POT}).to_string());
    c.push(
        "extension",
        "",
        json!([
            {"user": "<conv>", "robot": "Should I help with that?"},
            {"user": "[S1] Yes please.", "robot": "OK, I will do that. [ACT]"}
        ])
        .to_string(),
    );
    c.push("*", "", dyadic_draft_json());
    c
}

#[test]
fn stage_is_reproducible_under_cache() {
    let seeds = vec![
        TrajectorySeed::new("a", POT, "a.png"),
        TrajectorySeed::new("b", "go", "b.png"),
        TrajectorySeed::new("a", POT, "a.png"),
        TrajectorySeed::new("c", POT, "c.png"),
    ];
    let config = ScriptConfig { types: vec![InstructionType::Dyadic, InstructionType::DirectText], ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let cached = CachedChatClient::new(stage_client(), BlobCache::open(dir.path()).unwrap());
    let first = run_script_stage(&seeds, &config, &cached);
    assert_eq!(first.report.kept_seeds, 2);
    assert_eq!(first.report.dropped["TOO_FEW_TOKENS"], 1);
    assert_eq!(first.report.dropped["DUPLICATE_SOURCE"], 1);
    assert_eq!(first.records.len(), 4);
    let ids: Vec<_> = first.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["a-0", "a-1", "c-0", "c-1"]);

    // Warm cache, dead service: identical bytes.
    let offline = CachedChatClient::new(ReplayChatClient::default(), BlobCache::open(dir.path()).unwrap());
    let second = run_script_stage(&seeds, &config, &offline);
    let bytes = |o: &forge_core::script::ScriptOutcome| {
        o.records.iter().map(|r| serde_json::to_string(r).unwrap()).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(bytes(&first), bytes(&second));
    assert_eq!(offline.model(), "replay");
}

#[test]
fn intent_mismatch_is_counted() {
    let mut c = ReplayChatClient::default();
    c.push("judge", "", json!({"instruction": "open the microwave"}).to_string());
    c.push(
        "extension",
        "",
        json!([
            {"user": "<conv>", "robot": "Should I help?"},
            {"user": "[S1] Yes.", "robot": "OK. [ACT]"}
        ])
        .to_string(),
    );
    c.push("*", "", dyadic_draft_json());
    let config = ScriptConfig { types: vec![InstructionType::Dyadic], expansion: 1, ..Default::default() };
    let out = run_script_stage(&[pot_seed()], &config, &c);
    assert!(out.records.is_empty());
    assert_eq!(out.report.rejected["INTENT_MISMATCH"], 1);
}
