use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, HOP, N_BINS, N_FFT};
use crate::par::Exec;
use crate::{Result, SerError};

/// `|STFT|²` stored bin-major: `bins[bin * n_frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub bins: Vec<f64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub frame_hop: usize,
    pub window_len: usize,
}

impl PowerSpectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.bins[bin * self.n_frames + frame]
    }

    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.n_bins).map(|b| self.get(b, frame)).collect()
    }

    pub fn scale(&mut self, k: f64) {
        self.bins.iter_mut().for_each(|v| *v *= k);
    }
}

/// Periodic Hann window: `0.5 - 0.5 cos(2πn/N)`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reusable STFT plan: 2048-point FFT, periodic Hann window, hop 512,
/// centered frames with reflect padding.
#[derive(Clone)]
pub struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    exec: Exec,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("n_fft", &N_FFT).finish()
    }
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        Stft {
            fft,
            window: hann_periodic(N_FFT),
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn n_frames(len: usize) -> usize {
        1 + len / HOP
    }

    pub fn power(&self, samples: &[f64]) -> Result<PowerSpectrogram> {
        let pad = N_FFT / 2;
        if samples.len() <= pad {
            return Err(SerError::Shape(format!(
                "signal of {} samples is too short for reflect padding of {pad}",
                samples.len()
            )));
        }
        let padded = reflect_pad(samples, pad);
        let n_frames = Self::n_frames(samples.len());
        let columns = self.exec.map_range(n_frames, |t| {
            let start = t * HOP;
            let mut buf: Vec<Complex64> = padded[start..start + N_FFT]
                .iter()
                .zip(&self.window)
                .map(|(&x, &w)| Complex64::new(x * w, 0.0))
                .collect();
            self.fft.process(&mut buf);
            buf[..N_BINS].iter().map(|c| c.norm_sqr()).collect::<Vec<f64>>()
        });
        let mut bins = vec![0.0; N_BINS * n_frames];
        for (t, col) in columns.iter().enumerate() {
            for (b, &p) in col.iter().enumerate() {
                bins[b * n_frames + t] = p;
            }
        }
        Ok(PowerSpectrogram {
            bins,
            n_bins: N_BINS,
            n_frames,
            frame_hop: HOP,
            window_len: N_FFT,
        })
    }
}

/// Mirrors the signal about its end samples without repeating them.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

pub fn stft_power(clip: &AudioClip) -> Result<PowerSpectrogram> {
    Stft::new().power(&clip.samples)
}
