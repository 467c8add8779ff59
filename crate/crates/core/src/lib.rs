//! Forging of cross-modal contextual-instruction episodes.
//!
//! The crate is organised along the stages of the forge:
//!
//! - [`episode`]: the episode data model, transcript markup grammar and
//!   schema validation shared by every other stage.
//! - [`script`]: textual scripting (filtering, dialogue synthesis through a
//!   chat-completion service, interaction extension, intent validation).
//! - [`audio`]: auditory realization (speech synthesis, timeline assembly
//!   with controlled overlaps, event insertion, background mixing).
//! - [`codec`]: the DCT + BPE discrete action tokenizer.
//! - [`demux`]: splitting joint text/action token streams.
//! - [`realize`]: rendering accepted scripts into episodes on disk.
//! - [`dataset`]: manifests, shards, statistics and review sampling.

pub mod audio;
pub mod cache;
pub mod codec;
pub mod dataset;
pub mod demux;
pub mod episode;
pub mod lexicon;
pub mod realize;
pub mod script;

pub use episode::markup::{parse_markup, render_markup, MarkupDoc, MarkupError, Speaker, Turn};
pub use episode::{validate_episode, Episode, InstructionType};

/// Canonical audio sampling rate of every rendered episode.
pub const SAMPLE_RATE: u32 = 16_000;
