//! Two-class synthetic images standing in for a real corpus.
//!
//! Class 0 is Gaussian noise around a flat dark template `0.5 - 0.4 s`.
//! Class 1 is noise around `0.5 + 0.4 s (0.5 + 0.5 b)`, where `b` is a
//! Gaussian blob centred a third of the way into the image. At `s = 0` both
//! templates equal 0.5 and the classes are identically distributed.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Dataset;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub per_class: usize,
    pub shape: (usize, usize),
    /// Template distance in [0, 1].
    pub separation: f64,
    /// Per-pixel noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            per_class: 200,
            shape: (16, 16),
            separation: 0.5,
            noise: 0.15,
            seed: 0,
        }
    }
}

/// Noise-free template of `label`.
pub fn template(label: u8, shape: (usize, usize), separation: f64) -> Vec<f64> {
    let (h, w) = shape;
    if label == 0 {
        return vec![0.5 - 0.4 * separation; h * w];
    }
    let (ci, cj) = (h as f64 / 3.0, w as f64 / 3.0);
    let sigma = h.min(w) as f64 / 5.0;
    (0..h * w)
        .map(|k| {
            let (i, j) = ((k / w) as f64, (k % w) as f64);
            let blob = (-((i - ci).powi(2) + (j - cj).powi(2)) / (2.0 * sigma * sigma)).exp();
            0.5 + 0.4 * separation * (0.5 + 0.5 * blob)
        })
        .collect()
}

/// Generates `per_class` images of each class in shuffled order, pixels
/// clamped to [0, 1].
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let (h, w) = spec.shape;
    if h < 8 || w < 8 {
        return Err(Error::config(format!(
            "synthetic image shape {h}x{w} is too small; both sides must be at least 8"
        )));
    }
    if !(0.0..=1.0).contains(&spec.separation) {
        return Err(Error::config(format!(
            "synthetic separation must lie in [0, 1], got {}",
            spec.separation
        )));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(Error::config("synthetic noise must be finite and non-negative"));
    }
    if spec.per_class == 0 {
        return Err(Error::config("synthetic per_class must be at least 1"));
    }

    let mut rng = rng::seeded(spec.seed);
    let noise = Normal::new(0.0, spec.noise).expect("validated above");
    let templates = [template(0, spec.shape, spec.separation), template(1, spec.shape, spec.separation)];

    let mut order: Vec<u8> = (0..2 * spec.per_class).map(|i| (i % 2) as u8).collect();
    order.shuffle(&mut rng);

    let mut x = Vec::with_capacity(order.len() * h * w);
    for &label in &order {
        x.extend(
            templates[label as usize]
                .iter()
                .map(|t| (t + noise.sample(&mut rng)).clamp(0.0, 1.0)),
        );
    }
    Dataset::new(x, order, spec.shape)
}
