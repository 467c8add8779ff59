//! Active-region SNR measurement and background mixing.

use super::timeline::Timeline;
use super::{AudioError, Waveform};

/// Analysis frame and hop for the active-region detector.
const FRAME_SECONDS: f64 = 0.025;
const HOP_SECONDS: f64 = 0.010;
/// Frames quieter than this RMS are silence.
pub const SILENCE_RMS: f64 = 1e-4;
const CROSSFADE_SECONDS: f64 = 0.010;

/// Per-sample mask of the samples covered by at least one frame whose RMS
/// reaches the silence threshold.
pub fn active_mask(w: &Waveform) -> Vec<bool> {
    let n = w.len();
    let frame = ((FRAME_SECONDS * w.rate as f64).round() as usize).max(1);
    let hop = ((HOP_SECONDS * w.rate as f64).round() as usize).max(1);
    let mut mask = vec![false; n];
    let mut start = 0;
    loop {
        let end = (start + frame).min(n);
        if start >= end {
            break;
        }
        if super::rms(&w.samples[start..end]) >= SILENCE_RMS {
            mask[start..end].iter_mut().for_each(|m| *m = true);
        }
        if end == n {
            break;
        }
        start += hop;
    }
    mask
}

fn masked_power(samples: &[f64], mask: &[bool]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for (s, &m) in samples.iter().zip(mask) {
        if m {
            sum += s * s;
            count += 1;
        }
    }
    (sum, count)
}

/// `10 log10(P_signal / P_noise)`, both powers taken over the signal's active
/// region.
pub fn measure_snr(signal: &Waveform, noise: &Waveform) -> Result<f64, AudioError> {
    if signal.len() != noise.len() || signal.rate != noise.rate {
        return Err(AudioError::LengthMismatch);
    }
    let mask = active_mask(signal);
    let (ps, count) = masked_power(&signal.samples, &mask);
    let (pn, _) = masked_power(&noise.samples, &mask);
    if count == 0 || ps == 0.0 || pn == 0.0 {
        return Err(AudioError::SilentInput);
    }
    Ok(10.0 * (ps / pn).log10())
}

/// Repeats `noise` up to `len` samples, joining copies with an equal-power
/// crossfade.
pub fn loop_noise(noise: &Waveform, len: usize) -> Waveform {
    let src = &noise.samples;
    if src.len() >= len || src.is_empty() {
        let mut samples = src[..len.min(src.len())].to_vec();
        samples.resize(len, 0.0);
        return Waveform { samples, rate: noise.rate };
    }
    let fade = ((CROSSFADE_SECONDS * noise.rate as f64).round() as usize).min(src.len() / 2);
    let mut out: Vec<f64> = src.clone();
    while out.len() < len {
        let at = out.len() - fade;
        for i in 0..fade {
            let t = (i as f64 + 0.5) / fade as f64 * std::f64::consts::FRAC_PI_2;
            out[at + i] = out[at + i] * t.cos() + src[i] * t.sin();
        }
        out.extend_from_slice(&src[fade..]);
    }
    out.truncate(len);
    Waveform { samples: out, rate: noise.rate }
}

#[derive(Debug, Clone)]
pub struct Mixed {
    pub mixture: Waveform,
    pub signal: Waveform,
    /// Noise after looping and gain.
    pub noise: Waveform,
    pub gain: f64,
}

impl Mixed {
    pub fn achieved_snr_db(&self) -> Result<f64, AudioError> {
        measure_snr(&self.signal, &self.noise)
    }
}

/// Gain that brings noise of RMS `rms_noise` to `target_snr_db` below a signal
/// of RMS `rms_signal`.
pub fn snr_gain(rms_signal: f64, rms_noise: f64, target_snr_db: f64) -> f64 {
    rms_signal / (rms_noise * 10f64.powf(target_snr_db / 20.0))
}

/// Adds `noise` under the rendered timeline at `target_snr_db`, both RMS values
/// measured over the speech's active region.
pub fn mix_background(tl: &Timeline, noise: &Waveform, target_snr_db: f64) -> Result<Mixed, AudioError> {
    if noise.rate != tl.rate {
        return Err(AudioError::RateMismatch { expected: tl.rate, got: noise.rate });
    }
    let signal = tl.render();
    let mask = active_mask(&signal);
    let (ps, count) = masked_power(&signal.samples, &mask);
    if count == 0 || ps == 0.0 {
        return Err(AudioError::SilentTimeline);
    }
    if noise.samples.iter().all(|&s| s == 0.0) {
        return Err(AudioError::SilentNoise);
    }
    let looped = loop_noise(noise, signal.len());
    let (pn, _) = masked_power(&looped.samples, &mask);
    if pn == 0.0 {
        return Err(AudioError::SilentNoise);
    }
    let gain = snr_gain((ps / count as f64).sqrt(), (pn / count as f64).sqrt(), target_snr_db);
    let scaled: Vec<f64> = looped.samples.iter().map(|s| s * gain).collect();
    let mixture = signal.samples.iter().zip(&scaled).map(|(a, b)| a + b).collect();
    Ok(Mixed {
        mixture: Waveform { samples: mixture, rate: tl.rate },
        signal,
        noise: Waveform { samples: scaled, rate: tl.rate },
        gain,
    })
}
