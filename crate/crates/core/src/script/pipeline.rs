//! The scripting stage over a list of seeds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::client::ChatClient;
use super::filter::{FilterDecision, TrajectoryFilter};
use super::forge::{extend_interaction, identity_slots, synthesize_dialogue, validate_intent, IntentVerdict};
use super::{ScriptError, SpeakerInfo, TrajectorySeed};
use crate::cache::cache_key;
use crate::episode::markup::MarkupDoc;
use crate::episode::{ActionFrame, Demographic, InstructionType, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptConfig {
    pub types: Vec<InstructionType>,
    /// Variants generated per kept seed.
    pub expansion: usize,
    pub seed: u64,
    /// Run the intent judge and drop mismatches.
    pub validate: bool,
}

impl Default for ScriptConfig {
    fn default() -> Self {
        ScriptConfig { types: InstructionType::ALL.to_vec(), expansion: 2, seed: 0, validate: true }
    }
}

/// One accepted script, a line of `drafts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub id: String,
    pub instruction_type: InstructionType,
    pub original_instruction: String,
    pub conversation: MarkupDoc,
    pub scene_description: String,
    pub speaker_infos: Vec<SpeakerInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_sound_type: Option<String>,
    /// Catalog tag for each `[Sound]` anchor in document order.
    #[serde(default)]
    pub sound_tags: Vec<String>,
    pub frame_refs: Vec<String>,
    pub actions: Vec<ActionFrame>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptReport {
    pub seeds: usize,
    pub kept_seeds: usize,
    /// Filter drop reason code to count.
    pub dropped: BTreeMap<String, usize>,
    pub attempted: usize,
    pub accepted: usize,
    /// Error code (or `INTENT_MISMATCH`) to count.
    pub rejected: BTreeMap<String, usize>,
    pub accepted_per_type: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptOutcome {
    pub records: Vec<ScriptRecord>,
    pub report: ScriptReport,
}

fn variant_rng(stage_seed: u64, id: &str) -> ChaCha8Rng {
    let digest = cache_key(&["variant", id]);
    let h = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    ChaCha8Rng::seed_from_u64(stage_seed ^ h)
}

/// Distinct speaker identities for one variant, reproducible from the stage
/// seed and the episode id.
pub fn pick_demographics(itype: InstructionType, stage_seed: u64, id: &str) -> Vec<Demographic> {
    let mut rng = variant_rng(stage_seed, id);
    Demographic::ALL.choose_multiple(&mut rng, identity_slots(itype)).copied().collect()
}

fn script_one(
    seed: &TrajectorySeed,
    itype: InstructionType,
    id: &str,
    config: &ScriptConfig,
    client: &dyn ChatClient,
) -> Result<Option<ScriptRecord>, ScriptError> {
    let speakers = pick_demographics(itype, config.seed, id);
    let draft = synthesize_dialogue(seed, itype, &speakers, client)?;
    let plan = extend_interaction(&draft, &seed.original_instruction, client)?;
    if config.validate && itype != InstructionType::DirectText {
        if let IntentVerdict::Fail { inferred } = validate_intent(&plan, &seed.original_instruction, client)? {
            tracing::info!(id, inferred, "intent mismatch");
            return Ok(None);
        }
    }
    let anchors = plan.conversation.sound_anchor_count();
    let sound_tags = match &draft.selected_sound_type {
        Some(tag) => vec![tag.clone(); anchors],
        None => Vec::new(),
    };
    Ok(Some(ScriptRecord {
        id: id.to_string(),
        instruction_type: itype,
        original_instruction: seed.original_instruction.trim().to_string(),
        conversation: plan.conversation,
        scene_description: draft.scene_description,
        speaker_infos: draft.speaker_infos,
        selected_sound_type: draft.selected_sound_type,
        sound_tags,
        frame_refs: seed.frame_refs.clone(),
        actions: seed.actions.clone(),
        provenance: Provenance { source: seed.source.clone(), trajectory_id: seed.source_id.clone() },
    }))
}

/// Filters the seeds, then scripts `expansion` variants of each kept seed.
/// Variant `j` of the `i`-th kept seed gets type
/// `types[(i * expansion + j) % types.len()]` and id `{source_id}-{j}`.
/// Scripts that fail a check are counted in the report and left out.
pub fn run_script_stage(seeds: &[TrajectorySeed], config: &ScriptConfig, client: &dyn ChatClient) -> ScriptOutcome {
    let mut report = ScriptReport { seeds: seeds.len(), ..Default::default() };
    let mut records = Vec::new();
    if config.types.is_empty() {
        return ScriptOutcome { records, report };
    }
    let mut filter = TrajectoryFilter::new();
    let mut kept = 0usize;
    for seed in seeds {
        let mut seed = seed.clone();
        seed.fill_extraction();
        if let FilterDecision::Drop(reason) = filter.decide(&seed) {
            *report.dropped.entry(reason.code().to_string()).or_default() += 1;
            continue;
        }
        for j in 0..config.expansion {
            let itype = config.types[(kept * config.expansion + j) % config.types.len()];
            let id = format!("{}-{j}", seed.source_id);
            report.attempted += 1;
            match script_one(&seed, itype, &id, config, client) {
                Ok(Some(record)) => {
                    report.accepted += 1;
                    *report.accepted_per_type.entry(itype.to_string()).or_default() += 1;
                    records.push(record);
                }
                Ok(None) => *report.rejected.entry("INTENT_MISMATCH".into()).or_default() += 1,
                Err(e) => {
                    tracing::info!(id, error = %e, "script rejected");
                    *report.rejected.entry(e.code().to_string()).or_default() += 1;
                }
            }
        }
        kept += 1;
    }
    report.kept_seeds = kept;
    ScriptOutcome { records, report }
}
