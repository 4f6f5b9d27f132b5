//! Audio front end: WAV decoding and standardization, STFT power spectra,
//! mel filterbank, dB scaling and MFCC.
//!
//! All arithmetic is done in `f64`. A standardized clip is 6 s of mono audio
//! at 22050 Hz, which frames to exactly [`N_FRAMES`] columns.

mod audio;
mod dct;
mod features;
mod mel;
mod stft;

pub use audio::{load_and_standardize, load_wav_file, resample_linear, write_wav_pcm16, AudioClip};
pub use dct::Dct;
pub use features::{mel_spectrogram, mfcc, mfcc_with, FeatureConfig, FeatureExtractor, FeatureKind, FeatureMap};
pub use mel::{mel_scale, mel_to_hz, MelFilterbank};
pub use stft::{hann_periodic, stft_power, PowerSpectrogram, Stft};

pub const SAMPLE_RATE: u32 = 22_050;
pub const CLIP_SECONDS: usize = 6;
pub const CLIP_LEN: usize = CLIP_SECONDS * SAMPLE_RATE as usize;
pub const N_FFT: usize = 2048;
pub const HOP: usize = 512;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_MELS: usize = 128;
pub const N_MFCC: usize = 40;
/// Frame count of a standardized clip: `1 + CLIP_LEN / HOP`.
pub const N_FRAMES: usize = 1 + CLIP_LEN / HOP;
pub const TOP_DB: f64 = 80.0;
pub const AMIN: f64 = 1e-10;
