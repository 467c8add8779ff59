//! RIFF/WAVE reading and dithered PCM16 writing.

use std::io::Cursor;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AudioError, Waveform};

fn wav_err(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) => AudioError::Io(io),
        other => AudioError::Wav(other.to_string()),
    }
}

fn spec(rate: u32) -> hound::WavSpec {
    hound::WavSpec { channels: 1, sample_rate: rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int }
}

/// PCM16 samples with seeded triangular dither of +-1 LSB.
pub fn quantize_pcm16(w: &Waveform, seed: u64) -> Vec<i16> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    w.samples
        .iter()
        .map(|s| {
            let dither: f64 = rng.gen::<f64>() - rng.gen::<f64>();
            (s * 32767.0 + dither).round().clamp(-32768.0, 32767.0) as i16
        })
        .collect()
}

/// Writes mono PCM16. The same waveform and seed always produce the same bytes.
pub fn write_wav(path: &Path, w: &Waveform, seed: u64) -> Result<(), AudioError> {
    let bytes = encode_wav(w, seed)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_wav(w: &Waveform, seed: u64) -> Result<Vec<u8>, AudioError> {
    let mut buf = Cursor::new(Vec::new());
    let mut writer = hound::WavWriter::new(&mut buf, spec(w.rate)).map_err(wav_err)?;
    for s in quantize_pcm16(w, seed) {
        writer.write_sample(s).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(buf.into_inner())
}

/// Lossless 32-bit float encoding, used for cached clips.
pub fn encode_wav_f32(w: &Waveform) -> Result<Vec<u8>, AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut buf = Cursor::new(Vec::new());
    let mut writer = hound::WavWriter::new(&mut buf, spec).map_err(wav_err)?;
    for &s in &w.samples {
        writer.write_sample(s as f32).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(buf.into_inner())
}

fn decode<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<Waveform, AudioError> {
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    // Multi-channel input is folded to mono.
    let samples = interleaved.chunks(channels).map(|c| c.iter().sum::<f64>() / channels as f64).collect();
    Waveform::new(samples, spec.sample_rate)
}

pub fn read_wav(path: &Path) -> Result<Waveform, AudioError> {
    decode(hound::WavReader::open(path).map_err(wav_err)?)
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    decode(hound::WavReader::new(Cursor::new(bytes)).map_err(wav_err)?)
}

/// Header facts of a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: u16,
    pub rate: u32,
    pub bits: u16,
    pub integer: bool,
    pub frames: u32,
}

impl WavInfo {
    pub fn is_canonical(&self) -> bool {
        self.channels == 1 && self.rate == crate::SAMPLE_RATE && self.bits == 16 && self.integer
    }
}

pub fn wav_info(path: &Path) -> Result<WavInfo, AudioError> {
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    Ok(WavInfo {
        channels: spec.channels,
        rate: spec.sample_rate,
        bits: spec.bits_per_sample,
        integer: spec.sample_format == hound::SampleFormat::Int,
        frames: reader.duration(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_within_two_lsb() {
        let w = Waveform::new((0..800).map(|i| (i as f64 * 0.01).sin() * 0.8).collect(), 16_000).unwrap();
        let bytes = encode_wav(&w, 3).unwrap();
        assert_eq!(bytes, encode_wav(&w, 3).unwrap());
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.rate, 16_000);
        for (a, b) in w.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 2.0 / 32767.0);
        }
    }

    #[test]
    fn float_round_trip() {
        let w = Waveform::new(vec![0.25, -0.5, 0.125], 24_000).unwrap();
        assert_eq!(decode_wav(&encode_wav_f32(&w).unwrap()).unwrap(), w);
    }
}
