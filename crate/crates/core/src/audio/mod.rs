//! Auditory realization: resampling, timeline assembly, event insertion,
//! background mixing, CTC alignment and WAV output.

pub mod catalog;
pub mod ctc;
pub mod render;
pub mod resample;
pub mod snr;
pub mod timeline;
pub mod tts;
pub mod wav;

use thiserror::Error;

pub use ctc::{ctc_force_align, Alignment, CtcPosteriors};
pub use resample::resample;
pub use snr::{measure_snr, mix_background, Mixed};
pub use timeline::{assemble_timeline, insert_event, Channel, OverlapSpec, Placement, Timeline};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("sample rate must be positive")]
    BadRate,
    #[error("clip at {got} Hz, expected {expected} Hz")]
    RateMismatch { expected: u32, got: u32 },
    #[error("overlap of {seconds} s exceeds turn {turn} ({available} s)")]
    OverlapTooLong { turn: usize, seconds: f64, available: f64 },
    #[error("invalid overlap spec: {0}")]
    BadOverlap(String),
    #[error("anchor at {anchor_s} s outside timeline of {duration_s} s")]
    AnchorOutOfRange { anchor_s: f64, duration_s: f64 },
    #[error("overlay peaks at {peak}, above full scale")]
    PeakOverflow { peak: f64 },
    #[error("signal is silent over its active region")]
    SilentInput,
    #[error("timeline renders to silence")]
    SilentTimeline,
    #[error("background noise is silent")]
    SilentNoise,
    #[error("signal and noise differ in length or rate")]
    LengthMismatch,
    #[error("alignment infeasible: {frames} frames for {needed} required")]
    Infeasible { frames: usize, needed: usize },
    #[error("posterior row {0} is not a log-distribution")]
    InvalidPosteriors(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("turn text is empty")]
    EmptyText,
    #[error("speech service returned no audio")]
    EmptyAudio,
    #[error("voice `{0}` is not supported")]
    UnsupportedVoice(String),
    #[error("speech service error: {0}")]
    ServiceError(String),
    #[error("unknown catalog entry `{0}`")]
    UnknownClip(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(String),
}

impl AudioError {
    pub fn code(&self) -> &'static str {
        match self {
            AudioError::NonFinite(_) => "NON_FINITE",
            AudioError::BadRate => "BAD_RATE",
            AudioError::RateMismatch { .. } => "RATE_MISMATCH",
            AudioError::OverlapTooLong { .. } => "OVERLAP_TOO_LONG",
            AudioError::BadOverlap(_) => "BAD_OVERLAP",
            AudioError::AnchorOutOfRange { .. } => "ANCHOR_OUT_OF_RANGE",
            AudioError::PeakOverflow { .. } => "PEAK_OVERFLOW",
            AudioError::SilentInput => "SILENT_INPUT",
            AudioError::SilentTimeline => "SILENT_TIMELINE",
            AudioError::SilentNoise => "SILENT_NOISE",
            AudioError::LengthMismatch => "LENGTH_MISMATCH",
            AudioError::Infeasible { .. } => "INFEASIBLE",
            AudioError::InvalidPosteriors(_) => "INVALID_POSTERIORS",
            AudioError::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            AudioError::EmptyText => "EMPTY_TEXT",
            AudioError::EmptyAudio => "EMPTY_AUDIO",
            AudioError::UnsupportedVoice(_) => "UNSUPPORTED_VOICE",
            AudioError::ServiceError(_) => "SERVICE_ERROR",
            AudioError::UnknownClip(_) => "UNKNOWN_CLIP",
            AudioError::Io(_) => "IO",
            AudioError::Wav(_) => "WAV",
        }
    }
}

/// Mono audio at a given rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, rate: u32) -> Result<Self, AudioError> {
        if rate == 0 {
            return Err(AudioError::BadRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Waveform { samples, rate })
    }

    pub fn silence(len: usize, rate: u32) -> Self {
        Waveform { samples: vec![0.0; len], rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub(crate) fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Number of samples closest to `seconds` at `rate`.
pub fn seconds_to_samples(seconds: f64, rate: u32) -> usize {
    (seconds * rate as f64).round().max(0.0) as usize
}
