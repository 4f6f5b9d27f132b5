use super::{N_FFT, N_MELS, SAMPLE_RATE};
use crate::{Result, SerError};

/// HTK-style mel scale, `2595 log10(1 + f/700)`.
pub fn mel_scale(f_hz: f64) -> Result<f64> {
    if !(f_hz >= 0.0) {
        return Err(SerError::Domain(format!("negative frequency {f_hz} Hz")));
    }
    Ok(2595.0 * (1.0 + f_hz / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, peak 1 at their center, with centers uniformly spaced
/// in mel between `f_min` and `f_max`. Each row is stored sparsely as a
/// starting FFT bin and its run of weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_bins: usize,
    f_min: f64,
    f_max: f64,
    /// `n_mels + 2` edge frequencies; filter `m` spans `edges[m]..edges[m + 2]`.
    edges_hz: Vec<f64>,
    rows: Vec<(usize, Vec<f64>)>,
}

impl Default for MelFilterbank {
    fn default() -> Self {
        Self::new(N_MELS, N_FFT, SAMPLE_RATE, 0.0, SAMPLE_RATE as f64 / 2.0)
            .expect("default filterbank parameters are valid")
    }
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Self> {
        if n_mels == 0 || n_fft < 2 || !(f_max > f_min) {
            return Err(SerError::Config(format!(
                "invalid filterbank: n_mels={n_mels} n_fft={n_fft} f_min={f_min} f_max={f_max}"
            )));
        }
        let lo = mel_scale(f_min)?;
        let hi = mel_scale(f_max)?;
        let step = (hi - lo) / (n_mels + 1) as f64;
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + step * i as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let rows = (0..n_mels)
            .map(|m| {
                let (l, c, r) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
                let mut start = None;
                let mut weights = Vec::new();
                for k in 0..n_bins {
                    let f = k as f64 * bin_hz;
                    let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
                    if w > 0.0 {
                        start.get_or_insert(k);
                        weights.push(w);
                    } else if start.is_some() {
                        break;
                    }
                }
                (start.unwrap_or(0), weights)
            })
            .collect();
        Ok(MelFilterbank {
            n_bins,
            f_min,
            f_max,
            edges_hz,
            rows,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.rows.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }

    /// `(lower edge, center, upper edge)` of filter `m`, in Hz.
    pub fn band_hz(&self, m: usize) -> (f64, f64, f64) {
        (self.edges_hz[m], self.edges_hz[m + 1], self.edges_hz[m + 2])
    }

    pub fn weight(&self, m: usize, bin: usize) -> f64 {
        let (start, w) = &self.rows[m];
        if bin < *start {
            return 0.0;
        }
        w.get(bin - start).copied().unwrap_or(0.0)
    }

    /// Dense `[n_mels × n_bins]` row-major weight matrix.
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_mels() * self.n_bins];
        for (m, (start, w)) in self.rows.iter().enumerate() {
            out[m * self.n_bins + start..m * self.n_bins + start + w.len()].copy_from_slice(w);
        }
        out
    }

    /// `weights × power` for one spectrum of `n_bins` values.
    pub fn apply(&self, spectrum: &[f64], out: &mut [f64]) {
        for ((start, w), o) in self.rows.iter().zip(out.iter_mut()) {
            *o = w
                .iter()
                .zip(&spectrum[*start..*start + w.len()])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
}

impl MelFilterbank {
    pub(crate) fn check_bins(&self, rows: usize) -> Result<()> {
        if rows != self.n_bins {
            return Err(SerError::Shape(format!(
                "filterbank expects {} FFT bins, power spectrogram has {rows}",
                self.n_bins
            )));
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_reference_points() {
        assert_eq!(mel_scale(0.0).unwrap(), 0.0);
        let oracle = 2595.0 * 2f64.log10();
        assert!((mel_scale(700.0).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 781.17).abs() < 0.01);
        assert!(matches!(mel_scale(-1.0), Err(SerError::Domain(_))));
        assert!(mel_scale(f64::NAN).is_err());
    }

    #[test]
    fn mel_inverse_round_trips() {
        for f in [0.0, 12.5, 440.0, 1000.0, 11025.0] {
            assert!((mel_to_hz(mel_scale(f).unwrap()) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn filters_are_triangular_and_unimodal() {
        let fb = MelFilterbank::default();
        assert_eq!(fb.n_mels(), 128);
        assert_eq!(fb.n_bins(), 1025);
        let dense = fb.dense();
        let bin_hz = SAMPLE_RATE as f64 / N_FFT as f64;
        for m in 0..fb.n_mels() {
            let row = &dense[m * 1025..(m + 1) * 1025];
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(row.iter().any(|&w| w > 0.0), "filter {m} is empty");
            let (l, _, r) = fb.band_hz(m);
            for (k, &w) in row.iter().enumerate() {
                let f = k as f64 * bin_hz;
                if f <= l || f >= r {
                    assert_eq!(w, 0.0);
                }
            }
            // Non-decreasing then non-increasing.
            let peak = (0..1025).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert!(row[..=peak].windows(2).all(|p| p[0] <= p[1]));
            assert!(row[peak..].windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn bins_between_first_and_last_center_are_covered() {
        let fb = MelFilterbank::default();
        let bin_hz = SAMPLE_RATE as f64 / N_FFT as f64;
        let (first, last) = (fb.center_hz(0), fb.center_hz(fb.n_mels() - 1));
        for k in 0..fb.n_bins() {
            let f = k as f64 * bin_hz;
            if f > first && f < last {
                let col: f64 = (0..fb.n_mels()).map(|m| fb.weight(m, k)).sum();
                assert!(col > 0.0, "bin {k} ({f} Hz) uncovered");
            }
        }
    }

    #[test]
    fn centers_are_uniform_in_mel() {
        let fb = MelFilterbank::default();
        let step = mel_scale(11025.0).unwrap() / 129.0;
        for m in 0..fb.n_mels() {
            let c = mel_scale(fb.center_hz(m)).unwrap();
            assert!((c - step * (m + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_apply_matches_dense_product() {
        let fb = MelFilterbank::default();
        let spectrum: Vec<f64> = (0..1025).map(|k| ((k * 37) % 101) as f64).collect();
        let mut out = vec![0.0; 128];
        fb.apply(&spectrum, &mut out);
        let dense = fb.dense();
        for m in 0..128 {
            let d: f64 = (0..1025).map(|k| dense[m * 1025 + k] * spectrum[k]).sum();
            assert!((d - out[m]).abs() <= 1e-9 * d.abs().max(1.0));
        }
    }
}
