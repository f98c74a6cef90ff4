//! The learner: a small convolutional binary classifier, trained by
//! mini-batch SGD with momentum on the mean cross-entropy.

mod cnn;
mod metrics;
mod weights;

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use cnn::{Cnn, CLASSES, FILTERS, KERNEL, MIN_SIDE};
pub use metrics::{ConfusionMatrix, Metrics};
pub use weights::{ModelWeights, Tensor, WEIGHTS_MAGIC};

/// Row-major `n x m` pixel matrix with binary labels (1 = positive class).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<u8>,
    height: usize,
    width: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<u8>, shape: (usize, usize)) -> Result<Self> {
        let (height, width) = shape;
        let m = height * width;
        if m == 0 {
            return Err(Error::config("dataset image shape must be non-empty"));
        }
        if x.len() != y.len() * m {
            return Err(Error::DimensionMismatch {
                what: "dataset pixel count",
                expected: y.len() * m,
                found: x.len(),
            });
        }
        if let Some(bad) = y.iter().find(|&&l| l > 1) {
            return Err(Error::config(format!("dataset labels must be 0 or 1, found {bad}")));
        }
        Ok(Self {
            x,
            y,
            height,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Pixels per image.
    pub fn m(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.x[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.m())
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.y.iter().filter(|&&l| l == label).count()
    }

    /// `X + a` with the same `a` added to every row. No clamping.
    pub fn perturbed(&self, a: &[f64]) -> Result<Self> {
        if a.len() != self.m() {
            return Err(Error::DimensionMismatch {
                what: "perturbation length",
                expected: self.m(),
                found: a.len(),
            });
        }
        let x = self
            .x
            .chunks_exact(self.m())
            .flat_map(|row| row.iter().zip(a).map(|(p, d)| p + d))
            .collect();
        Ok(Self {
            x,
            y: self.y.clone(),
            height: self.height,
            width: self.width,
        })
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.m());
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Self {
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            height: self.height,
            width: self.width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "train.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "train.momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub weights: ModelWeights,
    /// Mean training loss of each epoch, accumulated over its mini-batches.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    /// `epoch,loss` CSV, epochs numbered from 1.
    pub fn write_loss_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "epoch,loss")?;
        for (i, l) in self.epoch_losses.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, l)?;
        }
        Ok(())
    }
}

// Samples per parallel gradient chunk. Fixed so the summation order, and
// hence the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

fn batch_gradient(model: &Cnn, data: &Dataset, batch: &[usize]) -> (f64, Vec<f64>) {
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; model.param_count()];
            let mut loss = 0.0;
            for &i in chunk {
                loss += model.backprop_into(data.row(i), data.labels()[i], scale, &mut g);
            }
            (loss, g)
        })
        .collect();
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss, grad)
}

/// Trains `model` in place and returns the final weights and loss history.
pub fn train(model: &mut Cnn, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if data.shape() != model.shape() {
        return Err(Error::config(format!(
            "dataset shape {:?} does not match model shape {:?}",
            data.shape(),
            model.shape()
        )));
    }
    if data.count_label(0) == 0 || data.count_label(1) == 0 {
        return Err(Error::config("training data must contain both classes"));
    }

    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = vec![0.0; model.param_count()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss_sum, grad) = batch_gradient(model, data, batch);
            total += loss_sum;
            for ((p, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
        epoch_losses.push(total / data.len() as f64);
    }

    Ok(TrainReport {
        weights: model.weights(),
        epoch_losses,
    })
}

/// Predicted labels for every row, ties resolved to class 0.
pub fn predict(model: &Cnn, data: &Dataset) -> Vec<u8> {
    assert_eq!(data.shape(), model.shape(), "dataset/model shape mismatch");
    (0..data.len())
        .into_par_iter()
        .map(|i| model.predict(data.row(i)))
        .collect()
}

pub fn evaluate(model: &Cnn, data: &Dataset) -> Metrics {
    Metrics::from_labels(data.labels(), &predict(model, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        // 4 images 8x8: class 1 bright, class 0 dark
        let mut x = Vec::new();
        let y = vec![1, 0, 1, 0];
        for &l in &y {
            x.extend(std::iter::repeat_n(if l == 1 { 0.9 } else { 0.1 }, 64));
        }
        Dataset::new(x, y, (8, 8)).unwrap()
    }

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::new(vec![0.0; 10], vec![0], (3, 3)).is_err());
        assert!(Dataset::new(vec![0.0; 9], vec![2], (3, 3)).is_err());
        let d = toy();
        assert_eq!(d.len(), 4);
        assert_eq!(d.m(), 64);
        assert_eq!(d.count_label(1), 2);
    }

    #[test]
    fn perturbed_adds_without_clamping() {
        let d = toy();
        let a = vec![0.5; 64];
        let p = d.perturbed(&a).unwrap();
        assert!((p.row(0)[0] - 1.4).abs() < 1e-15);
        assert_eq!(d.row(0)[0], 0.9);
        assert!(d.perturbed(&[0.0; 3]).is_err());
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let d = toy();
        let mut m = Cnn::new((8, 8), 1).unwrap();
        let zero_epochs = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mut m, &d, &zero_epochs), Err(Error::Config(_))));
        let single = d.select(&[0, 2]);
        assert!(matches!(
            train(&mut m, &single, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn loss_csv_format() {
        let r = TrainReport {
            weights: ModelWeights { layers: vec![] },
            epoch_losses: vec![0.5, 0.25],
        };
        let mut buf = Vec::new();
        r.write_loss_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss\n1,0.5\n2,0.25\n");
    }
}
