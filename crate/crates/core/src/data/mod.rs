//! Manifest-driven dataset handling: filtering, stratified folds and a
//! synthetic imbalanced corpus generator.

mod folds;
mod manifest;
mod synth;

pub use folds::{session_folds, stratified_kfold, FoldAssignment};
pub use manifest::{
    class_distribution, load_manifest, parse_manifest, write_manifest, DatasetManifest, Speaker, UtteranceRecord,
    MANIFEST_COLUMNS,
};
pub use synth::{generate_synthetic, largest_remainder, render_clip, ClassRecipe, SyntheticSpec};

/// Class proportions of the four-class improvised subset, in [`crate::Emotion`] order.
pub const REFERENCE_PROPORTIONS: [f64; 4] = [0.488, 0.123, 0.269, 0.120];
