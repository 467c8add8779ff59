//! Deterministic pre-filter over source trajectories.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::TrajectorySeed;
use crate::lexicon::{tokenize, Lexicon};

pub const MIN_TOKENS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DropReason {
    EmptyInstruction,
    DuplicateSource,
    LowInformation,
    TooFewTokens,
    NoObjectNoun,
}

impl DropReason {
    pub fn code(self) -> &'static str {
        match self {
            DropReason::EmptyInstruction => "EMPTY_INSTRUCTION",
            DropReason::DuplicateSource => "DUPLICATE_SOURCE",
            DropReason::LowInformation => "LOW_INFORMATION",
            DropReason::TooFewTokens => "TOO_FEW_TOKENS",
            DropReason::NoObjectNoun => "NO_OBJECT_NOUN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

/// Remembers the source ids it has kept, so repeated sources drop.
#[derive(Debug, Default)]
pub struct TrajectoryFilter {
    seen: HashSet<String>,
}

impl TrajectoryFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn decide(&mut self, seed: &TrajectorySeed) -> FilterDecision {
        let decision = Self::rules(seed, &self.seen);
        if decision == FilterDecision::Keep {
            self.seen.insert(seed.source_id.clone());
        }
        decision
    }

    fn rules(seed: &TrajectorySeed, seen: &HashSet<String>) -> FilterDecision {
        use DropReason::*;
        let instruction = seed.original_instruction.trim();
        if instruction.is_empty() {
            return FilterDecision::Drop(EmptyInstruction);
        }
        if seen.contains(&seed.source_id) {
            return FilterDecision::Drop(DuplicateSource);
        }
        if seed.low_information {
            return FilterDecision::Drop(LowInformation);
        }
        if tokenize(instruction).len() < MIN_TOKENS {
            return FilterDecision::Drop(TooFewTokens);
        }
        let lexicon = Lexicon::builtin();
        let known = seed.objects.iter().any(|o| lexicon.is_known_object(o))
            || !lexicon.extract(instruction).objects.is_empty();
        if !known {
            return FilterDecision::Drop(NoObjectNoun);
        }
        FilterDecision::Keep
    }
}

/// Single-seed decision with no dedup history.
pub fn filter_trajectory(seed: &TrajectorySeed) -> FilterDecision {
    TrajectoryFilter::new().decide(seed)
}
