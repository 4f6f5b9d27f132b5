use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{CLIP_LEN, SAMPLE_RATE};
use crate::{Result, SerError};

/// Mono audio at [`SAMPLE_RATE`], exactly [`CLIP_LEN`] samples once standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32, source_id: impl Into<String>) -> Self {
        AudioClip {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
        }
    }

    /// Wraps samples already at 22050 Hz, truncating or zero-padding to 6 s.
    pub fn standardized(mut samples: Vec<f64>, source_id: impl Into<String>) -> Self {
        samples.resize(CLIP_LEN, 0.0);
        AudioClip::new(samples, SAMPLE_RATE, source_id)
    }

    pub fn is_standardized(&self) -> bool {
        self.sample_rate_hz == SAMPLE_RATE && self.samples.len() == CLIP_LEN
    }
}

/// Decodes PCM WAV bytes and standardizes them: channel average, linear
/// resampling to 22050 Hz, then truncation or zero padding to 6 s.
pub fn load_and_standardize(wav_bytes: &[u8], source_id: &str) -> Result<AudioClip> {
    let reader = WavReader::new(Cursor::new(wav_bytes))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(SerError::Decode("zero channels".into()));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Int => {
            if !matches!(spec.bits_per_sample, 8 | 16 | 24 | 32) {
                return Err(SerError::Decode(format!(
                    "unsupported PCM bit depth {}",
                    spec.bits_per_sample
                )));
            }
            let full_scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<std::result::Result<_, _>>()?
        }
        SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
    };
    if interleaved.len() < channels {
        return Err(SerError::EmptyInput(format!("{source_id}: no audio frames")));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let mut samples = resample_linear(&mono, spec.sample_rate, SAMPLE_RATE, CLIP_LEN);
    samples.resize(CLIP_LEN, 0.0);
    Ok(AudioClip::new(samples, SAMPLE_RATE, source_id))
}

pub fn load_wav_file(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_and_standardize(&bytes, &id)
}

/// Linear-interpolation resampler. Produces at most `max_len` output samples.
pub fn resample_linear(input: &[f64], from_hz: u32, to_hz: u32, max_len: usize) -> Vec<f64> {
    if input.is_empty() {
        return Vec::new();
    }
    if from_hz == to_hz {
        return input[..input.len().min(max_len)].to_vec();
    }
    let ratio = from_hz as f64 / to_hz as f64;
    let out_len = ((input.len() as f64) / ratio).round() as usize;
    let out_len = out_len.clamp(1, max_len.max(1)).min(max_len);
    let last = input.len() - 1;
    (0..out_len)
        .map(|i| {
            let t = i as f64 * ratio;
            let i0 = t.floor() as usize;
            if i0 >= last {
                return input[last];
            }
            let frac = t - i0 as f64;
            input[i0] * (1.0 - frac) + input[i0 + 1] * frac
        })
        .collect()
}

/// Writes 16-bit mono PCM. Samples are clipped to [-1, 1].
pub fn write_wav_pcm16<W: std::io::Write + std::io::Seek>(
    out: W,
    samples: &[f64],
    sample_rate: u32,
) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::new(out, spec)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(samples: &[i32], channels: u16, rate: u32, bits: u16) -> Vec<u8> {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut buf, spec).unwrap();
        for &s in samples {
            match bits {
                8 => w.write_sample(s as i8).unwrap(),
                16 => w.write_sample(s as i16).unwrap(),
                _ => w.write_sample(s).unwrap(),
            }
        }
        w.finalize().unwrap();
        buf.into_inner()
    }

    #[test]
    fn long_clip_is_truncated() {
        let n = 8 * 22050;
        let samples: Vec<i32> = (0..n).map(|i| (i % 100) as i32 * 100).collect();
        let clip = load_and_standardize(&wav_bytes(&samples, 1, 22050, 16), "long").unwrap();
        assert_eq!(clip.samples.len(), CLIP_LEN);
        assert!(clip.is_standardized());
        assert_eq!(clip.samples[CLIP_LEN - 1], samples[CLIP_LEN - 1] as f64 / 32768.0);
    }

    #[test]
    fn short_clip_is_zero_padded() {
        let n = 3 * 22050;
        let samples = vec![1000i32; n];
        let clip = load_and_standardize(&wav_bytes(&samples, 1, 22050, 16), "short").unwrap();
        assert_eq!(clip.samples.len(), CLIP_LEN);
        assert!(clip.samples[n..].iter().all(|&x| x == 0.0));
        assert_eq!(CLIP_LEN - n, 66150);
        assert!(clip.samples[..n].iter().all(|&x| x > 0.0));
    }

    #[test]
    fn stereo_is_averaged_and_bit_depths_scale() {
        let frames = [(16384, -16384), (8192, 8192)];
        let inter: Vec<i32> = frames.iter().flat_map(|&(l, r)| [l, r]).collect();
        let clip = load_and_standardize(&wav_bytes(&inter, 2, 22050, 16), "st").unwrap();
        assert_eq!(clip.samples[0], 0.0);
        assert_eq!(clip.samples[1], 0.25);

        let clip8 = load_and_standardize(&wav_bytes(&[-128, 64], 1, 22050, 8), "b8").unwrap();
        assert_eq!(&clip8.samples[..2], &[-1.0, 0.5]);
        let clip24 =
            load_and_standardize(&wav_bytes(&[-(1 << 23), 1 << 22], 1, 22050, 24), "b24").unwrap();
        assert_eq!(&clip24.samples[..2], &[-1.0, 0.5]);
    }

    #[test]
    fn malformed_and_empty_inputs() {
        assert!(matches!(
            load_and_standardize(b"RIFFnope", "x"),
            Err(SerError::Decode(_))
        ));
        assert!(matches!(
            load_and_standardize(&[], "x"),
            Err(SerError::Decode(_))
        ));
        let empty = wav_bytes(&[], 1, 22050, 16);
        assert!(matches!(
            load_and_standardize(&empty, "x"),
            Err(SerError::EmptyInput(_))
        ));
    }

    #[test]
    fn resampler_halves_length_and_interpolates() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = resample_linear(&x, 44100, 22050, 100);
        assert_eq!(y, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        let up = resample_linear(&[0.0, 1.0], 11025, 22050, 100);
        assert_eq!(up, vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn pcm16_writer_round_trips() {
        let s: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.1).sin() * 0.5).collect();
        let mut buf = Cursor::new(Vec::new());
        write_wav_pcm16(&mut buf, &s, 22050).unwrap();
        let clip = load_and_standardize(buf.get_ref(), "rt").unwrap();
        for (a, b) in s.iter().zip(&clip.samples) {
            assert!((a - b).abs() < 1.0 / 32767.0);
        }
    }
}
