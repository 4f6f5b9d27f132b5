use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Orthonormal DCT-II of a fixed even length, computed through one N-point
/// complex FFT of the even/odd reordered input (Makhoul's method).
#[derive(Clone)]
pub struct Dct {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `e^{-iπk/2N}`
    twiddles: Vec<Complex64>,
}

impl std::fmt::Debug for Dct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct").field("n", &self.n).finish()
    }
}

impl Dct {
    /// # Panics
    /// If `n` is zero or odd.
    pub fn new(n: usize) -> Self {
        assert!(n > 0 && n % 2 == 0, "DCT length must be even and positive");
        let mut planner = FftPlanner::new();
        Dct {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            twiddles: (0..n)
                .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2 * n) as f64))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn scale(&self, k: usize) -> f64 {
        if k == 0 {
            (1.0 / self.n as f64).sqrt()
        } else {
            (2.0 / self.n as f64).sqrt()
        }
    }

    /// Orthonormal DCT-II of `input` (length `n`), returning all `n` coefficients.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.n);
        let n = self.n;
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n / 2 {
            v[i].re = input[2 * i];
            v[n - 1 - i].re = input[2 * i + 1];
        }
        self.forward.process(&mut v);
        (0..n)
            .map(|k| (v[k] * self.twiddles[k]).re * self.scale(k))
            .collect()
    }

    /// Inverse of [`Dct::forward`] (orthonormal DCT-III).
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let n = self.n;
        let raw: Vec<f64> = (0..n).map(|k| coeffs[k] / self.scale(k)).collect();
        let mut v: Vec<Complex64> = (0..n)
            .map(|k| {
                let mirror = if k == 0 { 0.0 } else { raw[n - k] };
                Complex64::new(raw[k], -mirror) * self.twiddles[k].conj()
            })
            .collect();
        self.inverse.process(&mut v);
        let mut out = vec![0.0; n];
        for i in 0..n / 2 {
            out[2 * i] = v[i].re / n as f64;
            out[2 * i + 1] = v[n - 1 - i].re / n as f64;
        }
        out
    }
}
