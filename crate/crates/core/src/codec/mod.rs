//! Discrete action tokenizer.
//!
//! A chunk of `N` consecutive 7-D delta actions is encoded as follows:
//!
//! 1. orthonormal DCT-II along time, independently per dimension;
//! 2. division by the per-dimension coefficient scale;
//! 3. mid-tread uniform quantization with step `q`, clipped to ±127 levels;
//! 4. flattening lowest frequency first (all dimensions of frequency 0, then
//!    frequency 1, ...) into base symbols `level + 127`;
//! 5. byte-pair merges;
//! 6. framing with `BOS_ACT` / `EOS_ACT`.
//!
//! Ids `0..255` are base symbols, 255 and 256 are the control symbols and
//! merges occupy `257..2048`. The total vocabulary is fixed at 2048 ids;
//! merge ids that a small corpus cannot fill stay reserved.

pub mod bpe;
pub mod dct;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{ActionFrame, ACTION_DIM};
use bpe::MergeTable;
use dct::DctPlan;

pub const VOCAB_SIZE: u32 = 2048;
pub const MAX_LEVEL: i32 = 127;
/// Number of base symbols (levels -127..=127).
pub const BASE_SYMBOLS: u32 = (2 * MAX_LEVEL + 1) as u32;
pub const BOS_ACT: u32 = BASE_SYMBOLS;
pub const EOS_ACT: u32 = BASE_SYMBOLS + 1;
pub const FIRST_MERGE_ID: u32 = BASE_SYMBOLS + 2;
pub const MAX_MERGES: usize = (VOCAB_SIZE - FIRST_MERGE_ID) as usize;
pub const DEFAULT_CHUNK_LEN: usize = 6;
pub const DEFAULT_STEP: f64 = 0.01;
pub const CODEC_VERSION: &str = "dct-bpe/1";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("chunk has {got} frames, model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value at frame {frame}, dim {dim}")]
    NonFinite { frame: usize, dim: usize },
    #[error("malformed token sequence: {0}")]
    MalformedSequence(String),
    #[error("payload has {got} coefficients, expected {expected}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("invalid codec model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CodecError {
    pub fn code(&self) -> &'static str {
        match self {
            CodecError::EmptyCorpus => "EMPTY_CORPUS",
            CodecError::ShapeMismatch { .. } => "SHAPE_MISMATCH",
            CodecError::NonFinite { .. } => "NON_FINITE",
            CodecError::MalformedSequence(_) => "MALFORMED_SEQUENCE",
            CodecError::TruncatedPayload { .. } => "TRUNCATED_PAYLOAD",
            CodecError::InvalidModel(_) => "INVALID_MODEL",
            CodecError::Io(_) => "IO",
            CodecError::Json(_) => "JSON",
        }
    }
}

/// `N` frames of 7-D actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionChunk {
    pub frames: Vec<[f64; ACTION_DIM]>,
}

impl ActionChunk {
    pub fn new(frames: Vec<[f64; ACTION_DIM]>) -> Self {
        ActionChunk { frames }
    }

    pub fn zeros(n: usize) -> Self {
        ActionChunk { frames: vec![[0.0; ACTION_DIM]; n] }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn max_abs_diff(&self, other: &ActionChunk) -> f64 {
        self.frames
            .iter()
            .zip(&other.frames)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Splits a trajectory into consecutive chunks of `n` frames; the last chunk is
/// padded by repeating the final frame. Frames that are not 7-D are rejected.
pub fn chunk_trajectory(actions: &[ActionFrame], n: usize) -> Result<Vec<ActionChunk>, CodecError> {
    let mut rows = Vec::with_capacity(actions.len());
    for (t, a) in actions.iter().enumerate() {
        let row: [f64; ACTION_DIM] = a.0.as_slice().try_into().map_err(|_| {
            CodecError::InvalidModel(format!("action {t} has {} components", a.0.len()))
        })?;
        rows.push(row);
    }
    Ok(rows
        .chunks(n)
        .map(|c| {
            let mut frames = c.to_vec();
            let last = *frames.last().unwrap();
            frames.resize(n, last);
            ActionChunk { frames }
        })
        .collect())
}

/// Framed action token ids in `[0, 2048)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionTokenSeq(pub Vec<u32>);

impl ActionTokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CodecConfig {
    pub chunk_len: usize,
    pub step: f64,
    pub max_merges: usize,
    /// Pairs seen fewer times than this are not merged.
    pub min_pair_count: u64,
    /// Quantile of |action| used as the robust per-dimension range.
    pub range_quantile: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            chunk_len: DEFAULT_CHUNK_LEN,
            step: DEFAULT_STEP,
            max_merges: MAX_MERGES,
            min_pair_count: 2,
            range_quantile: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecWarning {
    pub code: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseAlphabet {
    pub min_level: i32,
    pub max_level: i32,
    pub first_id: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MergeEntry {
    pair: [u32; 2],
    id: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    version: String,
    #[serde(rename = "N")]
    chunk_len: usize,
    #[serde(rename = "D")]
    dims: usize,
    scales: Vec<f64>,
    q: f64,
    coefficient_order: String,
    base_alphabet: BaseAlphabet,
    bos_id: u32,
    eos_id: u32,
    vocab_size: u32,
    merges: Vec<MergeEntry>,
}

const COEFFICIENT_ORDER: &str = "frequency_major";

/// Trained tokenizer state. Immutable once built.
#[derive(Debug, Clone)]
pub struct CodecModel {
    chunk_len: usize,
    /// Per-dimension coefficient scale: sqrt(N) times the robust max-abs of the
    /// raw dimension, so in-range chunks quantize without saturating.
    scales: [f64; ACTION_DIM],
    step: f64,
    merges: MergeTable,
    plan: DctPlan,
}

#[derive(Debug, Clone)]
pub struct TrainedCodec {
    pub model: CodecModel,
    pub warnings: Vec<CodecWarning>,
}

/// Per-encode counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeStats {
    pub saturated: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Fits scales and learns merges over `corpus`.
pub fn train_codec(corpus: &[ActionChunk], config: &CodecConfig) -> Result<TrainedCodec, CodecError> {
    if corpus.is_empty() {
        return Err(CodecError::EmptyCorpus);
    }
    let n = config.chunk_len;
    if !(config.step > 0.0) {
        return Err(CodecError::InvalidModel("quantization step must be positive".into()));
    }
    for chunk in corpus {
        check_chunk(chunk, n)?;
    }

    let mut warnings = Vec::new();
    let mut scales = [1.0; ACTION_DIM];
    for (d, scale) in scales.iter_mut().enumerate() {
        let values: Vec<f64> = corpus.iter().flat_map(|c| c.frames.iter().map(move |f| f[d])).collect();
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi - lo == 0.0 {
            warnings.push(CodecWarning { code: "DEGENERATE_DIMENSION".into(), dim: d });
            *scale = 1.0;
            continue;
        }
        let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let mut range = quantile(&abs, config.range_quantile);
        if range == 0.0 {
            range = *abs.last().unwrap();
        }
        *scale = range * (n as f64).sqrt();
    }

    let mut model = CodecModel {
        chunk_len: n,
        scales,
        step: config.step,
        merges: MergeTable::new(FIRST_MERGE_ID, Vec::new()),
        plan: DctPlan::new(n),
    };
    let streams: Vec<Vec<u32>> = corpus.iter().map(|c| model.base_symbols(c).0).collect();
    model.merges = bpe::learn_merges(
        &streams,
        FIRST_MERGE_ID,
        config.max_merges.min(MAX_MERGES),
        config.min_pair_count,
    );
    Ok(TrainedCodec { model, warnings })
}

fn check_chunk(chunk: &ActionChunk, n: usize) -> Result<(), CodecError> {
    if chunk.frames.len() != n {
        return Err(CodecError::ShapeMismatch { expected: n, got: chunk.frames.len() });
    }
    for (t, f) in chunk.frames.iter().enumerate() {
        if let Some(d) = f.iter().position(|v| !v.is_finite()) {
            return Err(CodecError::NonFinite { frame: t, dim: d });
        }
    }
    Ok(())
}

impl CodecModel {
    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn dims(&self) -> usize {
        ACTION_DIM
    }

    pub fn scales(&self) -> &[f64; ACTION_DIM] {
        &self.scales
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn vocab_size(&self) -> u32 {
        VOCAB_SIZE
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn merges(&self) -> &MergeTable {
        &self.merges
    }

    pub fn base_alphabet(&self) -> BaseAlphabet {
        BaseAlphabet { min_level: -MAX_LEVEL, max_level: MAX_LEVEL, first_id: 0 }
    }

    /// Worst-case reconstruction error of dimension `d` without saturation.
    pub fn error_bound_for(&self, d: usize) -> f64 {
        self.step * self.scales[d] * (self.chunk_len as f64).sqrt() / 2.0
    }

    /// `q * max_scale * sqrt(N) / 2`.
    pub fn error_bound(&self) -> f64 {
        (0..ACTION_DIM).map(|d| self.error_bound_for(d)).fold(0.0, f64::max)
    }

    /// Quantized base symbols, frequency-major.
    fn base_symbols(&self, chunk: &ActionChunk) -> (Vec<u32>, EncodeStats) {
        let n = self.chunk_len;
        let mut coeffs = vec![0.0; n * ACTION_DIM];
        let mut column = vec![0.0; n];
        let mut out = vec![0.0; n];
        for d in 0..ACTION_DIM {
            for (t, f) in chunk.frames.iter().enumerate() {
                column[t] = f[d];
            }
            self.plan.forward(&column, &mut out);
            for k in 0..n {
                coeffs[k * ACTION_DIM + d] = out[k];
            }
        }
        let mut stats = EncodeStats::default();
        let symbols = coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let level = (c / self.scales[i % ACTION_DIM] / self.step).round();
                let clipped = level.clamp(-MAX_LEVEL as f64, MAX_LEVEL as f64);
                if clipped != level {
                    stats.saturated += 1;
                }
                (clipped as i32 + MAX_LEVEL) as u32
            })
            .collect();
        (symbols, stats)
    }

    pub fn encode_chunk(&self, chunk: &ActionChunk) -> Result<ActionTokenSeq, CodecError> {
        self.encode_chunk_with_stats(chunk).map(|(seq, _)| seq)
    }

    pub fn encode_chunk_with_stats(
        &self,
        chunk: &ActionChunk,
    ) -> Result<(ActionTokenSeq, EncodeStats), CodecError> {
        check_chunk(chunk, self.chunk_len)?;
        let (mut symbols, stats) = self.base_symbols(chunk);
        self.merges.apply(&mut symbols);
        let mut tokens = Vec::with_capacity(symbols.len() + 2);
        tokens.push(BOS_ACT);
        tokens.extend(symbols);
        tokens.push(EOS_ACT);
        Ok((ActionTokenSeq(tokens), stats))
    }

    /// Base-symbol length of a chunk without merges (always `N * D + 2` framed).
    pub fn unmerged_len(&self) -> usize {
        self.chunk_len * ACTION_DIM + 2
    }

    pub fn decode_tokens(&self, tokens: &ActionTokenSeq) -> Result<ActionChunk, CodecError> {
        let ids = &tokens.0;
        if ids.first() != Some(&BOS_ACT) {
            return Err(CodecError::MalformedSequence("missing BOS_ACT".into()));
        }
        if ids.len() < 2 || ids.last() != Some(&EOS_ACT) {
            return Err(CodecError::MalformedSequence("missing EOS_ACT".into()));
        }
        let payload = &ids[1..ids.len() - 1];
        let merge_end = FIRST_MERGE_ID + self.merges.len() as u32;
        if let Some(&bad) = payload
            .iter()
            .find(|&&id| id == BOS_ACT || id == EOS_ACT || id >= merge_end)
        {
            return Err(CodecError::MalformedSequence(format!("unexpected id {bad} in payload")));
        }
        let mut symbols = Vec::with_capacity(self.chunk_len * ACTION_DIM);
        self.merges
            .expand(payload, &mut symbols)
            .ok_or_else(|| CodecError::MalformedSequence("un-mergeable token".into()))?;
        let expected = self.chunk_len * ACTION_DIM;
        if symbols.len() != expected {
            return Err(CodecError::TruncatedPayload { expected, got: symbols.len() });
        }

        let n = self.chunk_len;
        let mut frames = vec![[0.0; ACTION_DIM]; n];
        let mut coeffs = vec![0.0; n];
        let mut column = vec![0.0; n];
        for d in 0..ACTION_DIM {
            for (k, c) in coeffs.iter_mut().enumerate() {
                let level = symbols[k * ACTION_DIM + d] as i32 - MAX_LEVEL;
                *c = level as f64 * self.step * self.scales[d];
            }
            self.plan.inverse(&coeffs, &mut column);
            for (t, v) in column.iter().enumerate() {
                frames[t][d] = *v;
            }
        }
        Ok(ActionChunk { frames })
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            version: CODEC_VERSION.into(),
            chunk_len: self.chunk_len,
            dims: ACTION_DIM,
            scales: self.scales.to_vec(),
            q: self.step,
            coefficient_order: COEFFICIENT_ORDER.into(),
            base_alphabet: self.base_alphabet(),
            bos_id: BOS_ACT,
            eos_id: EOS_ACT,
            vocab_size: VOCAB_SIZE,
            merges: self
                .merges
                .pairs()
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| MergeEntry { pair: [a, b], id: FIRST_MERGE_ID + i as u32 })
                .collect(),
        }
    }

    fn from_file(file: ModelFile) -> Result<Self, CodecError> {
        let bad = |m: &str| CodecError::InvalidModel(m.to_string());
        if file.version != CODEC_VERSION {
            return Err(bad(&format!("unsupported version {}", file.version)));
        }
        if file.coefficient_order != COEFFICIENT_ORDER {
            return Err(bad("unsupported coefficient order"));
        }
        if file.dims != ACTION_DIM || file.scales.len() != ACTION_DIM {
            return Err(bad("model must have 7 dimensions"));
        }
        if file.chunk_len == 0 {
            return Err(bad("chunk length must be positive"));
        }
        if !(file.q > 0.0 && file.q.is_finite()) {
            return Err(bad("q must be positive"));
        }
        if file.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(bad("scales must be positive"));
        }
        if file.base_alphabet != (BaseAlphabet { min_level: -MAX_LEVEL, max_level: MAX_LEVEL, first_id: 0 })
            || file.bos_id != BOS_ACT
            || file.eos_id != EOS_ACT
            || file.vocab_size != VOCAB_SIZE
        {
            return Err(bad("alphabet layout does not match this codec version"));
        }
        if file.merges.len() > MAX_MERGES {
            return Err(bad("too many merges for a 2048-id vocabulary"));
        }
        let mut pairs = Vec::with_capacity(file.merges.len());
        for (i, m) in file.merges.iter().enumerate() {
            let id = FIRST_MERGE_ID + i as u32;
            if m.id != id {
                return Err(bad(&format!("merge {i} has id {}, expected {id}", m.id)));
            }
            // Parts must exist before the merge: the table is acyclic by construction.
            for part in m.pair {
                if part == BOS_ACT || part == EOS_ACT || part >= id {
                    return Err(bad(&format!("merge {id} references id {part}")));
                }
            }
            pairs.push((m.pair[0], m.pair[1]));
        }
        let mut scales = [0.0; ACTION_DIM];
        scales.copy_from_slice(&file.scales);
        Ok(CodecModel {
            chunk_len: file.chunk_len,
            scales,
            step: file.q,
            merges: MergeTable::new(FIRST_MERGE_ID, pairs),
            plan: DctPlan::new(file.chunk_len),
        })
    }

    pub fn to_json(&self) -> Result<String, CodecError> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self, CodecError> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CodecError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CodecError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Free-function forms of the model methods.
pub fn encode_chunk(chunk: &ActionChunk, model: &CodecModel) -> Result<ActionTokenSeq, CodecError> {
    model.encode_chunk(chunk)
}

pub fn decode_tokens(tokens: &ActionTokenSeq, model: &CodecModel) -> Result<ActionChunk, CodecError> {
    model.decode_tokens(tokens)
}
