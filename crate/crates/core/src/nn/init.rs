use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Scalar;

/// He-normal samples, `N(0, 2 / fan_in)`. Drawn in f64 so f32 and f64 models
/// built from the same seed agree up to rounding.
pub fn he_normal<T: Scalar, R: Rng>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| T::of(dist.sample(rng))).collect()
}
