use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{write_manifest, DatasetManifest, Speaker, UtteranceRecord};
use crate::dsp::{write_wav_pcm16, CLIP_LEN, SAMPLE_RATE};
use crate::par::Exec;
use crate::{Emotion, Result, SerError};

/// Per-class signal recipe: a harmonic carrier with slow amplitude
/// modulation plus band-limited noise. Every `*_jitter` field is the
/// half-width of a uniform per-clip perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecipe {
    pub carrier_hz: f64,
    pub carrier_jitter_hz: f64,
    pub harmonics: usize,
    /// Amplitude ratio between successive harmonics.
    pub harmonic_decay: f64,
    pub am_rate_hz: f64,
    pub am_rate_jitter_hz: f64,
    pub am_depth: f64,
    pub noise_low_hz: f64,
    pub noise_high_hz: f64,
    /// Relative half-width of a per-clip scaling applied to both band edges.
    #[serde(default)]
    pub noise_band_jitter: f64,
    /// Noise RMS relative to carrier RMS.
    pub noise_level: f64,
    pub noise_level_jitter: f64,
    pub gain_jitter_db: f64,
    /// Optional faint tone; zero frequency disables it.
    #[serde(default)]
    pub marker_hz: f64,
    #[serde(default)]
    pub marker_jitter_hz: f64,
    /// Tone amplitude relative to the RMS of carrier plus noise.
    #[serde(default)]
    pub marker_level: f64,
    #[serde(default)]
    pub marker_level_jitter: f64,
}

impl ClassRecipe {
    fn validate(&self, class: Emotion) -> Result<()> {
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        let bad = |what: &str| Err(SerError::Schema(format!("{class} recipe: {what}")));
        let finite = [
            self.carrier_hz,
            self.carrier_jitter_hz,
            self.harmonic_decay,
            self.am_rate_hz,
            self.am_rate_jitter_hz,
            self.am_depth,
            self.noise_low_hz,
            self.noise_high_hz,
            self.noise_band_jitter,
            self.noise_level,
            self.noise_level_jitter,
            self.gain_jitter_db,
            self.marker_hz,
            self.marker_jitter_hz,
            self.marker_level,
            self.marker_level_jitter,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("values must be finite and non-negative");
        }
        if self.carrier_hz <= self.carrier_jitter_hz || self.harmonics == 0 {
            return bad("carrier must stay positive with at least one harmonic");
        }
        if (self.carrier_hz + self.carrier_jitter_hz) * self.harmonics as f64 >= nyquist {
            return bad("harmonics reach the Nyquist frequency");
        }
        if !(0.0..=1.0).contains(&self.am_depth) {
            return bad("am_depth must lie in [0, 1]");
        }
        if self.noise_low_hz <= 0.0 || self.noise_low_hz >= self.noise_high_hz {
            return bad("noise band must satisfy 0 < low < high");
        }
        if self.noise_band_jitter >= 1.0 || self.noise_high_hz * (1.0 + self.noise_band_jitter) >= nyquist {
            return bad("jittered noise band must stay below the Nyquist frequency");
        }
        if self.marker_hz > 0.0 && (self.marker_hz <= self.marker_jitter_hz || self.marker_hz + self.marker_jitter_hz >= nyquist) {
            return bad("marker tone must stay inside (0, Nyquist)");
        }
        Ok(())
    }
}

fn default_recipes() -> [ClassRecipe; 4] {
    let base = ClassRecipe {
        carrier_hz: 180.0,
        carrier_jitter_hz: 80.0,
        harmonics: 4,
        harmonic_decay: 0.6,
        am_rate_hz: 2.5,
        am_rate_jitter_hz: 1.5,
        am_depth: 0.5,
        noise_low_hz: 300.0,
        noise_high_hz: 2000.0,
        noise_band_jitter: 0.2,
        noise_level: 0.6,
        noise_level_jitter: 0.4,
        gain_jitter_db: 6.0,
        marker_hz: 0.0,
        marker_jitter_hz: 0.0,
        marker_level: 0.0,
        marker_level_jitter: 0.0,
    };
    [
        base.clone(),
        ClassRecipe {
            carrier_hz: 200.0,
            am_rate_hz: 3.2,
            noise_high_hz: 2200.0,
            noise_level: 0.7,
            marker_hz: 2800.0,
            marker_jitter_hz: 200.0,
            marker_level: 0.1,
            marker_level_jitter: 0.05,
            ..base.clone()
        },
        ClassRecipe {
            carrier_hz: 140.0,
            carrier_jitter_hz: 30.0,
            harmonics: 3,
            am_rate_hz: 1.5,
            am_rate_jitter_hz: 0.6,
            am_depth: 0.4,
            noise_low_hz: 200.0,
            noise_high_hz: 1200.0,
            noise_band_jitter: 0.1,
            noise_level: 0.4,
            noise_level_jitter: 0.2,
            ..base.clone()
        },
        ClassRecipe {
            carrier_hz: 210.0,
            am_rate_hz: 3.8,
            noise_low_hz: 400.0,
            noise_high_hz: 2600.0,
            noise_level: 0.9,
            noise_level_jitter: 0.3,
            marker_hz: 4200.0,
            marker_jitter_hz: 300.0,
            marker_level: 0.1,
            marker_level_jitter: 0.05,
            ..base
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_total: usize,
    /// Class shares in [`Emotion`] order.
    pub proportions: [f64; 4],
    pub seed: u64,
    #[serde(default = "default_recipes")]
    pub recipes: [ClassRecipe; 4],
}

impl SyntheticSpec {
    pub fn new(n_total: usize, proportions: [f64; 4], seed: u64) -> Self {
        SyntheticSpec {
            n_total,
            proportions,
            seed,
            recipes: default_recipes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(SerError::Schema("n_total must be positive".into()));
        }
        if self.proportions.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SerError::Schema(format!("proportions must be non-negative: {:?}", self.proportions)));
        }
        let sum: f64 = self.proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SerError::Schema(format!("proportions sum to {sum}, expected 1")));
        }
        for (r, e) in self.recipes.iter().zip(Emotion::ALL) {
            r.validate(e)?;
        }
        Ok(())
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let v = largest_remainder(self.n_total, &self.proportions);
        [v[0], v[1], v[2], v[3]]
    }
}

/// Splits `n` into integer parts proportional to `shares` (summing to 1)
/// using the largest-remainder method; ties go to the lower index.
pub fn largest_remainder(n: usize, shares: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - out[a] as f64;
        let rb = exact[b] - out[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn bandpass(low: f64, high: f64, fs: f64) -> Self {
        let f0 = (low * high).sqrt();
        let q = f0 / (high - low);
        let w0 = 2.0 * PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w0.cos() / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn jitter<R: Rng>(rng: &mut R, center: f64, half_width: f64) -> f64 {
    if half_width == 0.0 {
        center
    } else {
        center + rng.random_range(-half_width..=half_width)
    }
}

/// One standardized-length clip for `recipe`, peak-normalized near 0.5.
pub fn render_clip<R: Rng>(recipe: &ClassRecipe, rng: &mut R) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let f0 = jitter(rng, recipe.carrier_hz, recipe.carrier_jitter_hz);
    let am_rate = jitter(rng, recipe.am_rate_hz, recipe.am_rate_jitter_hz).max(0.0);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let phases: Vec<f64> = (0..recipe.harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut carrier: Vec<f64> = (0..CLIP_LEN)
        .map(|n| {
            let t = n as f64 / fs;
            let env = 1.0 - 0.5 * recipe.am_depth * (1.0 - (2.0 * PI * am_rate * t + am_phase).cos());
            let mut amp = 1.0;
            let mut s = 0.0;
            for (h, ph) in phases.iter().enumerate() {
                s += amp * (2.0 * PI * (h + 1) as f64 * f0 * t + ph).sin();
                amp *= recipe.harmonic_decay;
            }
            env * s
        })
        .collect();
    let mut noise: Vec<f64> = (0..CLIP_LEN).map(|_| rng.sample(StandardNormal)).collect();
    let band = jitter(rng, 1.0, recipe.noise_band_jitter);
    let bp = Biquad::bandpass(recipe.noise_low_hz * band, recipe.noise_high_hz * band, fs);
    bp.run(&mut noise);
    bp.run(&mut noise);
    let level = jitter(rng, recipe.noise_level, recipe.noise_level_jitter).max(0.0);
    let scale = level * rms(&carrier) / rms(&noise).max(1e-12);
    for (c, n) in carrier.iter_mut().zip(&noise) {
        *c += scale * n;
    }
    if recipe.marker_hz > 0.0 {
        let f = jitter(rng, recipe.marker_hz, recipe.marker_jitter_hz);
        let a = jitter(rng, recipe.marker_level, recipe.marker_level_jitter).max(0.0) * rms(&carrier) * 2f64.sqrt();
        let ph = rng.random_range(0.0..2.0 * PI);
        for (n, c) in carrier.iter_mut().enumerate() {
            *c += a * (2.0 * PI * f * n as f64 / fs + ph).sin();
        }
    }
    let gain_db = jitter(rng, 0.0, recipe.gain_jitter_db);
    let peak = carrier.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let g = (0.5 * 10f64.powf(gain_db / 20.0)).min(0.95) / peak;
    carrier.iter_mut().for_each(|v| *v *= g);
    carrier
}

/// Writes `syn_NNNNN.wav` files and `manifest.csv` into `out_dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path, exec: Exec) -> Result<DatasetManifest> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut labels: Vec<Emotion> = Vec::with_capacity(spec.n_total);
    for (e, &n) in Emotion::ALL.iter().zip(&spec.class_counts()) {
        labels.extend(std::iter::repeat_n(*e, n));
    }
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let records = exec.map_range(spec.n_total, |i| -> Result<UtteranceRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let label = labels[i];
        let samples = render_clip(&spec.recipes[label.index()], &mut rng);
        let id = format!("syn_{i:05}");
        let file = PathBuf::from(format!("{id}.wav"));
        let out = BufWriter::new(fs::File::create(out_dir.join(&file))?);
        write_wav_pcm16(out, &samples, SAMPLE_RATE)?;
        Ok(UtteranceRecord {
            utterance_id: id,
            wav_path: file,
            label,
            session: (1 + i % 5) as u8,
            speaker: if rng.random_bool(0.5) { Speaker::F } else { Speaker::M },
            agreement: 3,
        })
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::new(records, out_dir);
    write_manifest(&manifest, BufWriter::new(fs::File::create(out_dir.join("manifest.csv"))?))?;
    Ok(manifest)
}
