//! Speech emotion recognition from mel spectrogram and MFCC features.
//!
//! The crate is organised bottom-up:
//!
//! * [`dsp`] turns PCM WAV audio into fixed-size 128-band log-mel spectrograms
//!   and 40-coefficient MFCC maps.
//! * [`nn`] is a small reverse-mode layer library (conv2d, batch norm, ReLU,
//!   pooling, fully-connected) with a finite-difference gradient checker.
//! * [`losses`] holds softmax cross-entropy and focal loss with analytic
//!   gradients.
//! * [`resnet`] assembles the 18-layer residual network.
//! * [`data`] handles manifests, stratified folds and synthetic corpora.
//! * [`train`] contains the training loop, metrics, cross-validation and the
//!   softmax-vs-focal ablation runner.
//!
//! Data-parallel loops go through [`par::Exec`]; with the `parallel` feature
//! disabled every loop runs sequentially and produces identical results.

pub mod data;
pub mod dsp;
pub mod error;
pub mod losses;
pub mod nn;
pub mod par;
pub mod resnet;
pub mod train;

pub use error::{Result, SerError};

/// Emotion classes in the row/column order used by every confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Emotion {
    Neutral,
    Happiness,
    Sadness,
    Anger,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [
        Emotion::Neutral,
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Anger,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Emotion> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Neutral => "Neutral",
            Emotion::Happiness => "Happiness",
            Emotion::Sadness => "Sadness",
            Emotion::Anger => "Anger",
        }
    }
}

impl std::fmt::Display for Emotion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
