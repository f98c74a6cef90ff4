//! Dataset loading, binary-pair construction and image export.

mod export;
mod idx;
mod image_dir;
mod synthetic;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Dataset;
use crate::rng;

pub use export::{encode_pgm, export_triptych, min_max_normalize, to_gray, write_pgm};
pub use idx::{
    encode_images, encode_labels, load_idx, parse_images, parse_labels, save_idx, IMAGES_MAGIC,
    LABELS_MAGIC,
};
pub use image_dir::{load_gray, load_image_dir, DEFAULT_IMAGE_SIZE};
pub use synthetic::{make_synthetic, template, SyntheticSpec};

/// 8-bit images with small integer labels, as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawLabeledImages {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    height: usize,
    width: usize,
    /// Display name of each label value; decimal digits when absent.
    class_names: Option<Vec<String>>,
}

impl RawLabeledImages {
    pub fn new(
        pixels: Vec<u8>,
        labels: Vec<u8>,
        shape: (usize, usize),
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (height, width) = shape;
        if height == 0 || width == 0 {
            return Err(Error::config("image dimensions must be positive"));
        }
        if pixels.len() != labels.len() * height * width {
            return Err(Error::DimensionMismatch {
                what: "raw image bytes",
                expected: labels.len() * height * width,
                found: pixels.len(),
            });
        }
        Ok(Self {
            pixels,
            labels,
            height,
            width,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let m = self.height * self.width;
        &self.pixels[i * m..(i + 1) * m]
    }

    pub fn label_name(&self, label: u8) -> String {
        self.class_names
            .as_ref()
            .and_then(|names| names.get(label as usize).cloned())
            .unwrap_or_else(|| label.to_string())
    }

    /// Resolves a class by name, or by its decimal label value.
    pub fn resolve_label(&self, name: &str) -> Result<u8> {
        if let Some(names) = &self.class_names {
            if let Some(i) = names.iter().position(|n| n == name) {
                return Ok(i as u8);
            }
        }
        name.parse::<u8>()
            .ok()
            .filter(|l| self.labels.contains(l))
            .ok_or_else(|| Error::config(format!("unknown label {name:?}")))
    }

    /// Quantizes a [0, 1] dataset to bytes (`round(255 x)`).
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        Self::new(
            crate::data_io::to_gray(data.pixels()),
            data.labels().to_vec(),
            data.shape(),
            None,
        )
    }
}

/// Which two classes to compare, and how much of each to use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    /// Mapped to label 1.
    pub positive: u8,
    /// Mapped to label 0.
    pub negative: u8,
    pub samples_per_class: usize,
    /// Fraction of each class assigned to the training split.
    pub train_fraction: f64,
}

impl PairSpec {
    pub fn new(positive: u8, negative: u8) -> Self {
        Self {
            positive,
            negative,
            samples_per_class: 1000,
            train_fraction: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positive == self.negative {
            return Err(Error::config(format!(
                "pair labels must differ, got {} twice",
                self.positive
            )));
        }
        if self.samples_per_class < 2 {
            return Err(Error::config("samples_per_class must be at least 2"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Indices of one class's samples to keep, subsampled and split.
fn class_split(indices: &mut Vec<usize>, spec: &PairSpec, rng: &mut rng::ExalRng) -> (Vec<usize>, Vec<usize>) {
    indices.shuffle(rng);
    indices.truncate(spec.samples_per_class);
    let n = indices.len();
    let n_train = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
    let test = indices.split_off(n_train);
    (std::mem::take(indices), test)
}

fn to_dataset(raw: &RawLabeledImages, indices: &[usize], positive: u8) -> Result<Dataset> {
    let mut x = Vec::with_capacity(indices.len() * raw.height * raw.width);
    let mut y = Vec::with_capacity(indices.len());
    for &i in indices {
        x.extend(raw.image(i).iter().map(|&p| p as f64 / 255.0));
        y.push(u8::from(raw.labels[i] == positive));
    }
    Dataset::new(x, y, raw.shape())
}

/// Filters `raw` to the two labels of `spec`, keeps at most
/// `samples_per_class` random samples per class and splits each class by
/// `train_fraction`. Pixels are scaled to [0, 1]; the positive label becomes
/// 1. Both splits are shuffled.
pub fn make_pair_dataset(raw: &RawLabeledImages, spec: &PairSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [spec.positive, spec.negative] {
        let mut indices: Vec<usize> = (0..raw.len()).filter(|&i| raw.labels[i] == label).collect();
        if indices.len() < 2 {
            return Err(Error::config(format!(
                "label {} has {} samples; at least 2 are needed",
                raw.label_name(label),
                indices.len()
            )));
        }
        let (tr, te) = class_split(&mut indices, spec, &mut rng);
        train.extend(tr);
        test.extend(te);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((
        to_dataset(raw, &train, spec.positive)?,
        to_dataset(raw, &test, spec.positive)?,
    ))
}

/// First `k` samples (in file order) of `label`, scaled to [0, 1].
pub fn first_of_class(raw: &RawLabeledImages, label: u8, k: usize) -> Vec<Vec<f64>> {
    (0..raw.len())
        .filter(|&i| raw.labels[i] == label)
        .take(k)
        .map(|i| raw.image(i).iter().map(|&p| p as f64 / 255.0).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_with_counts(counts: &[(u8, usize)]) -> RawLabeledImages {
        let mut labels = Vec::new();
        for &(l, n) in counts {
            labels.extend(std::iter::repeat_n(l, n));
        }
        let pixels = (0..labels.len() * 4).map(|i| (i % 256) as u8).collect();
        RawLabeledImages::new(pixels, labels, (2, 2), None).unwrap()
    }

    #[test]
    fn subsample_and_stratified_split() {
        let raw = raw_with_counts(&[(3, 1500), (5, 1500), (7, 10)]);
        let spec = PairSpec::new(3, 5);
        let (train, test) = make_pair_dataset(&raw, &spec, 11).unwrap();
        assert_eq!(train.len(), 1600);
        assert_eq!(test.len(), 400);
        assert_eq!(train.count_label(1), 800);
        assert_eq!(test.count_label(0), 200);
    }

    #[test]
    fn small_classes_keep_both_splits_populated() {
        let raw = raw_with_counts(&[(0, 2), (1, 3)]);
        let (train, test) = make_pair_dataset(&raw, &PairSpec::new(1, 0), 1).unwrap();
        for d in [&train, &test] {
            assert!(d.count_label(0) >= 1 && d.count_label(1) >= 1);
        }
        assert_eq!(train.len() + test.len(), 5);
    }

    #[test]
    fn normalization_endpoints() {
        let raw = RawLabeledImages::new(vec![255, 0, 255, 0, 0, 255, 0, 255], vec![1, 1, 0, 0], (1, 2), None).unwrap();
        let spec = PairSpec {
            samples_per_class: 2,
            train_fraction: 0.5,
            ..PairSpec::new(1, 0)
        };
        let (train, test) = make_pair_dataset(&raw, &spec, 0).unwrap();
        for d in [&train, &test] {
            assert!(d.pixels().iter().all(|&p| p == 0.0 || p == 1.0));
        }
    }

    #[test]
    fn missing_or_thin_label_is_config_error() {
        let raw = raw_with_counts(&[(0, 5), (1, 1)]);
        assert!(matches!(make_pair_dataset(&raw, &PairSpec::new(1, 0), 0), Err(Error::Config(_))));
        assert!(matches!(make_pair_dataset(&raw, &PairSpec::new(4, 0), 0), Err(Error::Config(_))));
        assert!(PairSpec::new(2, 2).validate().is_err());
    }

    #[test]
    fn seeded_split_is_reproducible() {
        let raw = raw_with_counts(&[(0, 50), (1, 60)]);
        let spec = PairSpec::new(1, 0);
        assert_eq!(make_pair_dataset(&raw, &spec, 9).unwrap(), make_pair_dataset(&raw, &spec, 9).unwrap());
    }

    #[test]
    fn resolve_by_name_or_digit() {
        let raw = RawLabeledImages::new(vec![0; 2], vec![0, 1], (1, 1), Some(vec!["VBA".into(), "VBKrypt".into()])).unwrap();
        assert_eq!(raw.resolve_label("VBKrypt").unwrap(), 1);
        assert_eq!(raw.resolve_label("0").unwrap(), 0);
        let err = raw.resolve_label("Zbot").unwrap_err().to_string();
        assert!(err.contains("Zbot"));
    }
}
