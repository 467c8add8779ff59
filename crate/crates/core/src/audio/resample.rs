//! Windowed-sinc sample-rate conversion.
//!
//! The kernel spans 32 zero crossings of the lower rate on each side (64 taps
//! at the lower rate), is shaped by a Kaiser window with beta 8 and cuts off at
//! the lower Nyquist frequency. Each fractional phase is normalized to unit DC
//! gain.

use super::Waveform;

const ZERO_CROSSINGS: usize = 32;
const KAISER_BETA: f64 = 8.0;
/// Above this many distinct phases the kernel is evaluated per output sample.
const MAX_TABLE_PHASES: u64 = 4096;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Kernel {
    /// Cutoff as a fraction of the input rate's Nyquist.
    scale: f64,
    /// Half-width in input samples.
    half_width: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(in_rate: u32, out_rate: u32) -> Self {
        let scale = (out_rate as f64 / in_rate as f64).min(1.0);
        Kernel { scale, half_width: ZERO_CROSSINGS as f64 / scale, i0_beta: bessel_i0(KAISER_BETA) }
    }

    fn eval(&self, x: f64) -> f64 {
        let r = x / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        let arg = std::f64::consts::PI * self.scale * x;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        self.scale * sinc * window
    }

    /// Taps for output position `base + frac` (input-sample units), starting at
    /// input index `base - reach + 1`, normalized to unit sum.
    fn taps(&self, frac: f64) -> Vec<f64> {
        let reach = self.half_width.ceil() as i64;
        let mut taps: Vec<f64> = (-reach + 1..=reach).map(|k| self.eval(frac - k as f64)).collect();
        let sum: f64 = taps.iter().sum();
        if sum.abs() > 1e-12 {
            for t in &mut taps {
                *t /= sum;
            }
        }
        taps
    }
}

/// Converts `w` to `target_rate`. Output length is `round(len * out / in)`;
/// converting to the same rate returns the input unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Waveform {
    assert!(target_rate > 0, "target rate must be positive");
    if w.rate == target_rate || w.samples.is_empty() {
        let len = (w.samples.len() as u128 * target_rate as u128 + w.rate as u128 / 2) / w.rate as u128;
        let mut samples = w.samples.clone();
        samples.resize(len as usize, 0.0);
        return Waveform { samples, rate: target_rate };
    }
    let (in_rate, out_rate) = (w.rate as u64, target_rate as u64);
    let out_len = ((w.samples.len() as u64 * out_rate + in_rate / 2) / in_rate) as usize;
    let kernel = Kernel::new(w.rate, target_rate);
    let reach = kernel.half_width.ceil() as i64;

    // Output n sits at input position n * in / out = base + num / out.
    let g = gcd(in_rate, out_rate);
    let phases = out_rate / g;
    let table: Option<Vec<Vec<f64>>> = (phases <= MAX_TABLE_PHASES).then(|| {
        (0..phases)
            .map(|p| kernel.taps(((p * in_rate) % out_rate) as f64 / out_rate as f64))
            .collect()
    });

    let src = &w.samples;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * in_rate;
        let base = (pos / out_rate) as i64;
        let num = pos % out_rate;
        let computed;
        let taps: &[f64] = match &table {
            Some(t) => &t[(n % phases) as usize],
            None => {
                computed = kernel.taps(num as f64 / out_rate as f64);
                &computed
            }
        };
        let start = base - reach + 1;
        let mut acc = 0.0;
        for (j, tap) in taps.iter().enumerate() {
            let idx = start + j as i64;
            if idx >= 0 && (idx as usize) < src.len() {
                acc += tap * src[idx as usize];
            }
        }
        out.push(acc);
    }
    Waveform { samples: out, rate: target_rate }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_bit_exact() {
        let w = Waveform { samples: vec![0.1, -0.25, 0.3333], rate: 16_000 };
        assert_eq!(resample(&w, 16_000), w);
    }

    #[test]
    fn lengths_follow_rate_ratio() {
        let w = Waveform::silence(24_000, 24_000);
        let out = resample(&w, 16_000);
        assert_eq!(out.len(), 16_000);
        assert!(out.samples.iter().all(|&s| s == 0.0));
        let w = Waveform::silence(441, 44_100);
        assert_eq!(resample(&w, 16_000).len(), 160);
    }

    #[test]
    fn table_phases_match_direct_evaluation() {
        let k = Kernel::new(24_000, 16_000);
        let a = k.taps(0.5);
        let b = k.taps(1.0 / 2.0);
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
