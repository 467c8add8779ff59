//! Orthonormal DCT-II and its inverse (DCT-III) over short frame windows.

use std::f64::consts::PI;

/// Precomputed orthonormal cosine basis for length `n`.
#[derive(Debug, Clone)]
pub struct DctPlan {
    n: usize,
    // basis[k * n + i] = s_k * cos(pi * (2i + 1) * k / (2n))
    basis: Vec<f64>,
}

impl DctPlan {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "DCT length must be positive");
        let mut basis = vec![0.0; n * n];
        let norm0 = (1.0 / n as f64).sqrt();
        let norm = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let s = if k == 0 { norm0 } else { norm };
            for i in 0..n {
                basis[k * n + i] = s * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        DctPlan { n, basis }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (k, o) in out.iter_mut().enumerate().take(self.n) {
            let row = &self.basis[k * self.n..(k + 1) * self.n];
            *o = row.iter().zip(x).map(|(b, v)| b * v).sum();
        }
    }

    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.n);
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|k| self.basis[k * self.n + i] * coeffs[k]).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_input_has_only_dc() {
        let plan = DctPlan::new(6);
        let mut out = [0.0; 6];
        plan.forward(&[0.5; 6], &mut out);
        // 0.5 * sqrt(6)
        assert!((out[0] - 1.224_744_871_391_589).abs() < 1e-12);
        for c in &out[1..] {
            assert!(c.abs() < 1e-12);
        }
    }

    #[test]
    fn forward_inverse_is_identity_up_to_32() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=32 {
            let plan = DctPlan::new(n);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut c = vec![0.0; n];
            let mut y = vec![0.0; n];
            plan.forward(&x, &mut c);
            plan.inverse(&c, &mut y);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12, "n={n}");
            }
            // Parseval
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = c.iter().map(|v| v * v).sum();
            assert!((ex - ec).abs() < 1e-12);
        }
    }
}
