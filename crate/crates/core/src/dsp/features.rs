use serde::{Deserialize, Serialize};

use super::{AudioClip, Dct, MelFilterbank, PowerSpectrogram, Stft, AMIN, N_MELS, N_MFCC, TOP_DB};
use crate::par::Exec;
use crate::{Result, SerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Spectrogram,
    Mfcc,
}

impl FeatureKind {
    pub fn rows(self) -> usize {
        match self {
            FeatureKind::Spectrogram => N_MELS,
            FeatureKind::Mfcc => N_MFCC,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Spectrogram => "spectrogram",
            FeatureKind::Mfcc => "mfcc",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = SerError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spectrogram" | "spec" | "mel" => Ok(FeatureKind::Spectrogram),
            "mfcc" => Ok(FeatureKind::Mfcc),
            other => Err(SerError::Config(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// A `rows × cols` time-frequency matrix, row-major, rows = frequency/cepstral index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub kind: FeatureKind,
}

impl FeatureMap {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize, kind: FeatureKind) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(SerError::Shape(format!(
                "{} values for a {rows}x{cols} feature map",
                values.len()
            )));
        }
        Ok(FeatureMap { values, rows, cols, kind })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Per-coefficient mean/variance normalization of MFCCs over time.
    pub mfcc_normalize: bool,
}

/// Log-mel spectrogram in dB: `10 log10(max(W·P, 1e-10))`, floored 80 dB
/// below the clip maximum.
pub fn mel_spectrogram(power: &PowerSpectrogram, fb: &MelFilterbank) -> Result<FeatureMap> {
    fb.check_bins(power.n_bins)?;
    let (n_mels, t) = (fb.n_mels(), power.n_frames);
    let mut values = vec![0.0; n_mels * t];
    let mut spectrum = vec![0.0; power.n_bins];
    let mut mel = vec![0.0; n_mels];
    for frame in 0..t {
        for (b, s) in spectrum.iter_mut().enumerate() {
            *s = power.bins[b * t + frame];
        }
        fb.apply(&spectrum, &mut mel);
        for (m, &v) in mel.iter().enumerate() {
            values[m * t + frame] = 10.0 * v.max(AMIN).log10();
        }
    }
    let floor = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - TOP_DB;
    values.iter_mut().for_each(|v| *v = v.max(floor));
    FeatureMap::new(values, n_mels, t, FeatureKind::Spectrogram)
}

/// 40 orthonormal DCT-II coefficients per frame of a 128-band dB spectrogram.
pub fn mfcc(mel_db: &FeatureMap) -> Result<FeatureMap> {
    mfcc_with(mel_db, &Dct::new(N_MELS), FeatureConfig::default())
}

pub fn mfcc_with(mel_db: &FeatureMap, dct: &Dct, cfg: FeatureConfig) -> Result<FeatureMap> {
    if mel_db.kind != FeatureKind::Spectrogram || mel_db.rows != dct.len() {
        return Err(SerError::Shape(format!(
            "MFCC needs a {}-band dB spectrogram, got {:?} with {} rows",
            dct.len(),
            mel_db.kind,
            mel_db.rows
        )));
    }
    let t = mel_db.cols;
    let mut values = vec![0.0; N_MFCC * t];
    for frame in 0..t {
        let coeffs = dct.forward(&mel_db.column(frame));
        for (k, &c) in coeffs[..N_MFCC].iter().enumerate() {
            values[k * t + frame] = c;
        }
    }
    if cfg.mfcc_normalize {
        for row in values.chunks_mut(t) {
            let mean = row.iter().sum::<f64>() / t as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            let std = var.sqrt().max(1e-12);
            row.iter_mut().for_each(|v| *v = (*v - mean) / std);
        }
    }
    FeatureMap::new(values, N_MFCC, t, FeatureKind::Mfcc)
}

/// Precomputed STFT plan, filterbank and DCT; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    stft: Stft,
    filterbank: MelFilterbank,
    dct: Dct,
    pub config: FeatureConfig,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(FeatureConfig::default())
    }
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Self {
        FeatureExtractor {
            // Batch calls parallelize over clips, so frames stay sequential.
            stft: Stft::new().with_exec(Exec::Sequential),
            filterbank: MelFilterbank::default(),
            dct: Dct::new(N_MELS),
            config,
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn power(&self, clip: &AudioClip) -> Result<PowerSpectrogram> {
        self.stft.power(&clip.samples)
    }

    pub fn spectrogram(&self, clip: &AudioClip) -> Result<FeatureMap> {
        mel_spectrogram(&self.power(clip)?, &self.filterbank)
    }

    /// Both feature kinds from one STFT pass.
    pub fn both(&self, clip: &AudioClip) -> Result<(FeatureMap, FeatureMap)> {
        let spec = self.spectrogram(clip)?;
        let m = mfcc_with(&spec, &self.dct, self.config)?;
        Ok((spec, m))
    }

    pub fn extract(&self, clip: &AudioClip, kind: FeatureKind) -> Result<FeatureMap> {
        let spec = self.spectrogram(clip)?;
        match kind {
            FeatureKind::Spectrogram => Ok(spec),
            FeatureKind::Mfcc => mfcc_with(&spec, &self.dct, self.config),
        }
    }

    pub fn extract_batch(&self, clips: &[AudioClip], kind: FeatureKind, exec: Exec) -> Vec<Result<FeatureMap>> {
        exec.map_slice(clips, |c| self.extract(c, kind))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mel_scale, stft_power, CLIP_LEN, N_FFT, N_FRAMES, SAMPLE_RATE};
    use std::f64::consts::PI;

    fn sine_clip(freq: f64, amp: f64) -> AudioClip {
        let s = (0..CLIP_LEN)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        AudioClip::standardized(s, "sine")
    }

    fn chirp_clip(amp: f64) -> AudioClip {
        let s = (0..CLIP_LEN)
            .map(|i| {
                let t = i as f64 / SAMPLE_RATE as f64;
                amp * (2.0 * PI * (200.0 * t + 150.0 * t * t)).sin() + amp * 0.01 * (i as f64 * 0.37).sin()
            })
            .collect();
        AudioClip::standardized(s, "chirp")
    }

    #[test]
    fn zero_power_gives_uniform_floor() {
        let clip = AudioClip::standardized(vec![0.0; CLIP_LEN], "z");
        let spec = FeatureExtractor::default().spectrogram(&clip).unwrap();
        assert_eq!((spec.rows, spec.cols), (128, 259));
        assert!(spec.values.iter().all(|&v| v == -100.0));
    }

    #[test]
    fn db_values_stay_within_top_db_of_peak() {
        let spec = FeatureExtractor::default().spectrogram(&chirp_clip(0.5)).unwrap();
        let peak = spec.max();
        assert!(spec.values.iter().all(|&v| v <= peak && v >= peak - 80.0));
        assert!(spec.values.iter().any(|&v| v == peak - 80.0));
    }

    #[test]
    fn amplitude_times_ten_adds_twenty_db() {
        let ex = FeatureExtractor::default();
        let a = ex.spectrogram(&chirp_clip(0.05)).unwrap();
        let b = ex.spectrogram(&chirp_clip(0.5)).unwrap();
        let (fa, fb) = (a.max() - 80.0, b.max() - 80.0);
        assert!((fb - fa - 20.0).abs() < 1e-9);
        for (x, y) in a.values.iter().zip(&b.values) {
            if *x > fa {
                assert!((y - x - 20.0).abs() < 1e-9, "{x} -> {y}");
            }
        }
    }

    #[test]
    fn sine_peaks_in_band_bracketing_440() {
        let ex = FeatureExtractor::default();
        let clip = sine_clip(440.0, 1.0);
        let spec = ex.spectrogram(&clip).unwrap();
        let fb = ex.filterbank();

        // Brute force: dense weights times the direct power spectrum.
        let power = stft_power(&clip).unwrap();
        let dense = fb.dense();
        let mid = power.frame(100);
        let brute: Vec<f64> = (0..128)
            .map(|m| (0..1025).map(|k| dense[m * 1025 + k] * mid[k]).sum())
            .collect();
        let brute_arg = (0..128).max_by(|&a, &b| brute[a].total_cmp(&brute[b])).unwrap();
        let (l, _, r) = fb.band_hz(brute_arg);
        assert!(l < 440.0 && 440.0 < r);

        // The center nearest 440 Hz in mel.
        let target = mel_scale(440.0).unwrap();
        let nearest = (0..128)
            .min_by(|&a, &b| {
                let da = (mel_scale(fb.center_hz(a)).unwrap() - target).abs();
                let db = (mel_scale(fb.center_hz(b)).unwrap() - target).abs();
                da.total_cmp(&db)
            })
            .unwrap();
        assert!(brute_arg.abs_diff(nearest) <= 1);

        for t in 1..spec.cols - 1 {
            let col = spec.column(t);
            let arg = (0..128).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert_eq!(arg, brute_arg, "frame {t}");
        }
        let _ = N_FFT;
    }

    #[test]
    fn mfcc_shapes_and_constant_frames() {
        let spec = FeatureMap::new(vec![-20.0; 128 * 3], 128, 3, FeatureKind::Spectrogram).unwrap();
        let m = mfcc(&spec).unwrap();
        assert_eq!((m.rows, m.cols, m.kind), (40, 3, FeatureKind::Mfcc));
        for t in 0..3 {
            assert!((m.get(0, t) + 20.0 * 128f64.sqrt()).abs() < 1e-9);
            assert!((1..40).all(|k| m.get(k, t).abs() < 1e-9));
        }
    }

    #[test]
    fn mfcc_rejects_wrong_input() {
        let wrong = FeatureMap::new(vec![0.0; 40 * 2], 40, 2, FeatureKind::Mfcc).unwrap();
        assert!(matches!(mfcc(&wrong), Err(SerError::Shape(_))));
        let short = FeatureMap::new(vec![0.0; 64 * 2], 64, 2, FeatureKind::Spectrogram).unwrap();
        assert!(matches!(mfcc(&short), Err(SerError::Shape(_))));
    }

    #[test]
    fn filterbank_shape_mismatch() {
        let p = PowerSpectrogram {
            bins: vec![0.0; 10],
            n_bins: 5,
            n_frames: 2,
            frame_hop: 512,
            window_len: 2048,
        };
        assert!(matches!(
            mel_spectrogram(&p, &MelFilterbank::default()),
            Err(SerError::Shape(_))
        ));
    }

    #[test]
    fn both_kinds_share_frame_count_and_are_deterministic() {
        let ex = FeatureExtractor::default();
        let clip = chirp_clip(0.3);
        let (s1, m1) = ex.both(&clip).unwrap();
        let (s2, m2) = ex.both(&clip).unwrap();
        assert_eq!(s1.cols, N_FRAMES);
        assert_eq!(m1.cols, N_FRAMES);
        assert_eq!((s1.rows, m1.rows), (128, 40));
        assert_eq!(s1, s2);
        assert_eq!(m1, m2);
        assert_eq!(ex.extract(&clip, FeatureKind::Mfcc).unwrap(), m1);
    }

    #[test]
    fn normalized_mfcc_rows_are_standardized() {
        let ex = FeatureExtractor::new(FeatureConfig { mfcc_normalize: true });
        let m = ex.extract(&chirp_clip(0.3), FeatureKind::Mfcc).unwrap();
        for row in m.values.chunks(m.cols) {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }
}
