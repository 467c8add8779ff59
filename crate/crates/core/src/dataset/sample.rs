//! Seeded review sampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::episode::{Episode, InstructionType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub episode_id: String,
    pub instruction_type: InstructionType,
    pub original_instruction: String,
    /// Canonical markup.
    pub transcript: String,
    /// Audio path relative to the batch root.
    pub audio_ref: String,
    /// Calibration items are shown to annotators but left out of agreement rates.
    #[serde(default)]
    pub calibration: bool,
}

impl BatchItem {
    pub fn from_episode(e: &Episode) -> Self {
        BatchItem {
            episode_id: e.id.clone(),
            instruction_type: e.instruction_type,
            original_instruction: e.original_instruction.clone(),
            transcript: e.conversation.to_markup().unwrap_or_default(),
            audio_ref: e.audio_ref.clone(),
            calibration: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewBatch {
    /// Directory audio references resolve against.
    pub root: String,
    pub seed: u64,
    pub stratified: bool,
    pub items: Vec<BatchItem>,
}

impl ReviewBatch {
    pub fn item(&self, episode_id: &str) -> Option<&BatchItem> {
        self.items.iter().find(|i| i.episode_id == episode_id)
    }
}

/// Per-type quotas: `n / k` each over the `k` present types, the remainder
/// going to a seeded choice of types, and any shortfall of a small type moved
/// to types with episodes to spare.
fn quotas(groups: &BTreeMap<InstructionType, Vec<&Episode>>, n: usize, rng: &mut ChaCha8Rng) -> BTreeMap<InstructionType, usize> {
    let mut types: Vec<InstructionType> = groups.keys().copied().collect();
    types.shuffle(rng);
    let k = types.len();
    let mut quota: BTreeMap<InstructionType, usize> =
        types.iter().enumerate().map(|(i, t)| (*t, n / k + usize::from(i < n % k))).collect();
    let mut spare = 0;
    for (t, q) in quota.iter_mut() {
        let have = groups[t].len();
        if *q > have {
            spare += *q - have;
            *q = have;
        }
    }
    while spare > 0 {
        let mut moved = false;
        for t in &types {
            let q = quota.get_mut(t).unwrap();
            if spare > 0 && *q < groups[t].len() {
                *q += 1;
                spare -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    quota
}

/// Draws `n` episodes for human review. The same episodes, `n` and seed
/// always give the same batch. With `stratify`, types are represented as
/// evenly as their sizes allow.
pub fn sample_for_review(
    episodes: &[Episode],
    n: usize,
    seed: u64,
    stratify: bool,
    root: &str,
) -> Result<ReviewBatch, DatasetError> {
    if n == 0 {
        return Err(DatasetError::EmptySample);
    }
    if n > episodes.len() {
        return Err(DatasetError::SampleTooLarge { requested: n, available: episodes.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<&Episode> = episodes.iter().collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    let mut picked: Vec<&Episode> = if stratify {
        let mut groups: BTreeMap<InstructionType, Vec<&Episode>> = BTreeMap::new();
        for e in &pool {
            groups.entry(e.instruction_type).or_default().push(e);
        }
        let quota = quotas(&groups, n, &mut rng);
        let mut out = Vec::with_capacity(n);
        for (t, mut group) in groups {
            group.shuffle(&mut rng);
            out.extend(group.into_iter().take(quota[&t]));
        }
        out
    } else {
        pool.shuffle(&mut rng);
        pool.truncate(n);
        pool
    };
    picked.shuffle(&mut rng);
    Ok(ReviewBatch {
        root: root.to_string(),
        seed,
        stratified: stratify,
        items: picked.into_iter().map(BatchItem::from_episode).collect(),
    })
}
