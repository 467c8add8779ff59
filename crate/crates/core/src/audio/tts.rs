//! Speech synthesis clients.

use std::time::Duration;

use serde::Serialize;

use super::{resample, AudioError, Waveform};
use crate::cache::{cache_key, BlobCache};
use crate::episode::{SpeakerProfile, Turn};
use crate::SAMPLE_RATE;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtsRequest {
    pub text: String,
    pub voice: SpeakerProfile,
    /// Delivery hint, e.g. an emotional style for turns carrying a sentiment cue.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
}

pub trait TtsClient: Send + Sync {
    fn synthesize(&self, request: &TtsRequest) -> Result<Waveform, AudioError>;
}

impl<T: TtsClient + ?Sized> TtsClient for &T {
    fn synthesize(&self, request: &TtsRequest) -> Result<Waveform, AudioError> {
        (**self).synthesize(request)
    }
}

/// Style hint sent for turns that carry a sentiment cue.
pub const SENTIMENT_STYLE: &str = "emotive";

/// Synthesizes one turn in `voice` and returns it at 16 kHz.
pub fn synthesize_turn(turn: &Turn, voice: &SpeakerProfile, client: &dyn TtsClient) -> Result<Waveform, AudioError> {
    let text = turn.text.trim();
    if text.is_empty() {
        return Err(AudioError::EmptyText);
    }
    let style = (!turn.sentiment_cues.is_empty()).then(|| SENTIMENT_STYLE.to_string());
    let request = TtsRequest { text: text.to_string(), voice: voice.clone(), style };
    let clip = client.synthesize(&request)?;
    if clip.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    Ok(resample(&clip, SAMPLE_RATE))
}

/// Offline stand-in for a voice-cloning service. Every character becomes a
/// short segment: letters a tone whose pitch depends on the letter and the
/// voice, everything else silence. Output is deterministic.
#[derive(Debug, Clone)]
pub struct MockTts {
    pub rate: u32,
    pub char_seconds: f64,
    pub lead_seconds: f64,
    pub amplitude: f64,
}

impl Default for MockTts {
    fn default() -> Self {
        MockTts { rate: 24_000, char_seconds: 0.045, lead_seconds: 0.05, amplitude: 0.25 }
    }
}

fn voice_pitch(voice: &SpeakerProfile) -> f64 {
    let h = voice.timbre_ref.bytes().fold(0u32, |h, b| h.wrapping_mul(31).wrapping_add(b as u32));
    110.0 + (h % 120) as f64
}

impl MockTts {
    /// Sample range of character `i` inside a synthesized clip.
    pub fn char_span(&self, i: usize) -> (usize, usize) {
        let lead = (self.lead_seconds * self.rate as f64).round() as usize;
        let per = (self.char_seconds * self.rate as f64).round() as usize;
        (lead + i * per, lead + (i + 1) * per)
    }
}

impl TtsClient for MockTts {
    fn synthesize(&self, req: &TtsRequest) -> Result<Waveform, AudioError> {
        if req.voice.timbre_ref.trim().is_empty() {
            return Err(AudioError::UnsupportedVoice(req.voice.id.clone()));
        }
        let chars: Vec<char> = req.text.chars().collect();
        let (_, end) = self.char_span(chars.len().saturating_sub(1));
        let total = if chars.is_empty() { 0 } else { end + self.char_span(0).0 };
        let mut samples = vec![0.0; total];
        let base = voice_pitch(&req.voice);
        let gain = if req.style.is_some() { self.amplitude * 1.3 } else { self.amplitude };
        for (i, c) in chars.iter().enumerate() {
            if !c.is_alphabetic() {
                continue;
            }
            let (a, b) = self.char_span(i);
            let f = base * (1.0 + (c.to_ascii_lowercase() as u32 % 26) as f64 / 26.0);
            let len = b - a;
            for (j, s) in samples[a..b].iter_mut().enumerate() {
                let t = j as f64 / self.rate as f64;
                // Raised-cosine envelope avoids clicks between characters.
                let env = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * j as f64 / len as f64).cos();
                *s = gain * env * (2.0 * std::f64::consts::PI * f * t).sin();
            }
        }
        Waveform::new(samples, self.rate)
    }
}

/// Remote voice-cloning service speaking a small JSON protocol: the request
/// body is a [`TtsRequest`], the response body a WAV file.
pub struct HttpTts {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    retries: usize,
}

impl HttpTts {
    /// `api_key_env` names the environment variable holding the bearer token.
    pub fn new(endpoint: impl Into<String>, api_key_env: &str, timeout: Duration) -> Result<Self, AudioError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AudioError::ServiceError(e.to_string()))?;
        Ok(HttpTts { endpoint: endpoint.into(), api_key: std::env::var(api_key_env).ok(), client, retries: 3 })
    }

    fn attempt(&self, req: &TtsRequest) -> Result<Waveform, AudioError> {
        let mut call = self.client.post(&self.endpoint).json(req);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| AudioError::ServiceError(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 422 {
            return Err(AudioError::UnsupportedVoice(req.voice.id.clone()));
        }
        if !status.is_success() {
            return Err(AudioError::ServiceError(format!("HTTP {status}")));
        }
        let bytes = resp.bytes().map_err(|e| AudioError::ServiceError(e.to_string()))?;
        super::wav::decode_wav(&bytes)
    }
}

impl TtsClient for HttpTts {
    fn synthesize(&self, req: &TtsRequest) -> Result<Waveform, AudioError> {
        let mut last = None;
        for attempt in 0..=self.retries {
            match self.attempt(req) {
                Err(AudioError::ServiceError(e)) => {
                    tracing::warn!(attempt, error = %e, "speech request failed");
                    last = Some(AudioError::ServiceError(e));
                    std::thread::sleep(Duration::from_millis(200 << attempt));
                }
                other => return other,
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Caches synthesized clips on disk, keyed by the full request.
pub struct CachedTts<C> {
    inner: C,
    cache: BlobCache,
}

impl<C: TtsClient> CachedTts<C> {
    pub fn new(inner: C, cache: BlobCache) -> Self {
        CachedTts { inner, cache }
    }
}

impl<C: TtsClient> TtsClient for CachedTts<C> {
    fn synthesize(&self, req: &TtsRequest) -> Result<Waveform, AudioError> {
        let body = serde_json::to_string(req).map_err(|e| AudioError::ServiceError(e.to_string()))?;
        let key = cache_key(&["tts/1", &body]);
        let bytes = self
            .cache
            .get_or_insert_with(&key, || super::wav::encode_wav_f32(&self.inner.synthesize(req)?))?;
        super::wav::decode_wav(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{AgeGroup, Gender, Speaker};

    fn voice() -> SpeakerProfile {
        SpeakerProfile { id: "v1".into(), age_group: AgeGroup::Adult, gender: Gender::Female, timbre_ref: "v1.wav".into() }
    }

    struct Fixed(Waveform);
    impl TtsClient for Fixed {
        fn synthesize(&self, _: &TtsRequest) -> Result<Waveform, AudioError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn resampled_to_canonical_rate() {
        let turn = Turn::new(Speaker::S1, "Hello there");
        let clip = Waveform::new(vec![0.1; 24_000], 24_000).unwrap();
        let out = synthesize_turn(&turn, &voice(), &Fixed(clip)).unwrap();
        assert_eq!(out.rate, 16_000);
        assert_eq!(out.len(), 16_000);
    }

    #[test]
    fn empty_text_and_empty_audio() {
        let client = Fixed(Waveform::silence(0, 24_000));
        let err = synthesize_turn(&Turn::new(Speaker::S1, "  "), &voice(), &client).unwrap_err();
        assert_eq!(err.code(), "EMPTY_TEXT");
        let err = synthesize_turn(&Turn::new(Speaker::S1, "hi"), &voice(), &client).unwrap_err();
        assert_eq!(err.code(), "EMPTY_AUDIO");
    }

    #[test]
    fn mock_is_deterministic_and_rejects_missing_timbre() {
        let req = TtsRequest { text: "pick up the cup".into(), voice: voice(), style: None };
        let a = MockTts::default().synthesize(&req).unwrap();
        assert_eq!(a, MockTts::default().synthesize(&req).unwrap());
        assert!(a.peak() <= 0.25 + 1e-12);
        let mut bad = req.clone();
        bad.voice.timbre_ref.clear();
        assert_eq!(MockTts::default().synthesize(&bad).unwrap_err().code(), "UNSUPPORTED_VOICE");
    }

    #[test]
    fn cache_returns_identical_clip() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedTts::new(MockTts::default(), BlobCache::open(dir.path()).unwrap());
        let req = TtsRequest { text: "open the drawer".into(), voice: voice(), style: None };
        let a = cached.synthesize(&req).unwrap();
        let b = cached.synthesize(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
