//! The classifier: 3x3 convolution (8 filters, same padding) -> ReLU ->
//! 2x2 max-pool -> dense layer to 2 logits.
//!
//! Parameters live in one flat vector laid out as
//! `conv.weight [8,1,3,3] | conv.bias [8] | dense.weight [2,F] | dense.bias [2]`
//! with `F = 8 * (H/2) * (W/2)`; gradients use the same layout.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

use super::weights::{ModelWeights, Tensor};

pub const FILTERS: usize = 8;
pub const KERNEL: usize = 3;
pub const CLASSES: usize = 2;
pub const MIN_SIDE: usize = 8;

const CONV_W: usize = FILTERS * KERNEL * KERNEL;

#[derive(Clone, Debug, PartialEq)]
pub struct Cnn {
    height: usize,
    width: usize,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backprop.
struct Trace {
    /// Pre-activation conv output, `[FILTERS, H, W]`.
    conv: Vec<f64>,
    /// Index into `conv` of each pooled maximum.
    argmax: Vec<usize>,
    /// Pooled features, `[FILTERS, H/2, W/2]`.
    pooled: Vec<f64>,
    logits: [f64; CLASSES],
}

impl Cnn {
    /// Builds the model with He-style uniform initialization
    /// (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zero biases.
    pub fn new(shape: (usize, usize), seed: u64) -> Result<Self> {
        let (height, width) = shape;
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::config(format!(
                "image shape {height}x{width} is too small; both sides must be at least {MIN_SIDE}"
            )));
        }
        let mut model = Self {
            height,
            width,
            params: vec![],
        };
        model.params = vec![0.0; model.param_count()];

        let mut rng = rng::seeded(seed);
        let conv_limit = (6.0 / (KERNEL * KERNEL) as f64).sqrt();
        let dense_limit = (6.0 / model.features() as f64).sqrt();
        let (conv_w, rest) = model.params.split_at_mut(CONV_W);
        for w in conv_w {
            *w = rng::uniform(&mut rng, -conv_limit, conv_limit);
        }
        let dense_w = &mut rest[FILTERS..FILTERS + CLASSES * model_features(height, width)];
        for w in dense_w {
            *w = rng::uniform(&mut rng, -dense_limit, dense_limit);
        }
        Ok(model)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Length of the flattened pooled feature vector.
    pub fn features(&self) -> usize {
        model_features(self.height, self.width)
    }

    pub fn param_count(&self) -> usize {
        CONV_W + FILTERS + CLASSES * self.features() + CLASSES
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_specs(&self) -> [(&'static str, Vec<usize>); 4] {
        [
            ("conv.weight", vec![FILTERS, 1, KERNEL, KERNEL]),
            ("conv.bias", vec![FILTERS]),
            ("dense.weight", vec![CLASSES, self.features()]),
            ("dense.bias", vec![CLASSES]),
        ]
    }

    pub fn weights(&self) -> ModelWeights {
        let mut offset = 0;
        let layers = self
            .layer_specs()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let values = self.params[offset..offset + n].to_vec();
                offset += n;
                Tensor {
                    name: name.to_string(),
                    shape,
                    values,
                }
            })
            .collect();
        ModelWeights { layers }
    }

    /// Replaces all parameters. The snapshot must have exactly this model's
    /// layer names and shapes.
    pub fn set_weights(&mut self, weights: &ModelWeights) -> Result<()> {
        let specs = self.layer_specs();
        if weights.layers.len() != specs.len() {
            return Err(Error::DimensionMismatch {
                what: "weight snapshot layer count",
                expected: specs.len(),
                found: weights.layers.len(),
            });
        }
        for (t, (name, shape)) in weights.layers.iter().zip(&specs) {
            if t.name != *name || t.shape != *shape || t.values.len() != t.numel() {
                return Err(Error::Format {
                    what: "weight snapshot",
                    reason: format!(
                        "layer {:?} {:?} does not match model layer {name:?} {shape:?}",
                        t.name, t.shape
                    ),
                });
            }
        }
        self.params = weights.flatten();
        Ok(())
    }

    fn check_input(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.pixels(),
            "input has {} pixels, model expects {}",
            x.len(),
            self.pixels()
        );
    }

    /// Class scores for one flattened `H x W` image.
    pub fn logits(&self, x: &[f64]) -> [f64; CLASSES] {
        self.forward(x).logits
    }

    /// Predicted label; ties go to class 0.
    pub fn predict(&self, x: &[f64]) -> u8 {
        let l = self.logits(x);
        u8::from(l[1] > l[0])
    }

    fn forward(&self, x: &[f64]) -> Trace {
        self.check_input(x);
        let (h, w) = (self.height, self.width);
        let (ph, pw) = (h / 2, w / 2);
        let p = &self.params;
        let (conv_w, conv_b) = (&p[..CONV_W], &p[CONV_W..CONV_W + FILTERS]);
        let dense_off = CONV_W + FILTERS;
        let nf = self.features();
        let dense_w = &p[dense_off..dense_off + CLASSES * nf];
        let dense_b = &p[dense_off + CLASSES * nf..];

        let mut conv = vec![0.0; FILTERS * h * w];
        for f in 0..FILTERS {
            let k = &conv_w[f * 9..f * 9 + 9];
            let out = &mut conv[f * h * w..(f + 1) * h * w];
            for i in 0..h {
                for j in 0..w {
                    let mut acc = conv_b[f];
                    for di in 0..KERNEL {
                        let ii = i + di;
                        if ii == 0 || ii > h {
                            continue;
                        }
                        let row = &x[(ii - 1) * w..ii * w];
                        for dj in 0..KERNEL {
                            let jj = j + dj;
                            if jj == 0 || jj > w {
                                continue;
                            }
                            acc += k[di * KERNEL + dj] * row[jj - 1];
                        }
                    }
                    out[i * w + j] = acc;
                }
            }
        }

        let mut pooled = vec![0.0; nf];
        let mut argmax = vec![0; nf];
        for f in 0..FILTERS {
            for pi in 0..ph {
                for pj in 0..pw {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = f * h * w + (2 * pi + di) * w + 2 * pj + dj;
                        let v = conv[idx].max(0.0);
                        if v > best_v {
                            best_v = v;
                            best = idx;
                        }
                    }
                    let o = f * ph * pw + pi * pw + pj;
                    pooled[o] = best_v;
                    argmax[o] = best;
                }
            }
        }

        let mut logits = [0.0; CLASSES];
        for (c, l) in logits.iter_mut().enumerate() {
            let row = &dense_w[c * nf..(c + 1) * nf];
            *l = dense_b[c] + row.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
        }

        Trace {
            conv,
            argmax,
            pooled,
            logits,
        }
    }

    /// Cross-entropy of one sample; adds `scale * dloss/dparams` into `grad`.
    pub(crate) fn backprop_into(&self, x: &[f64], label: u8, scale: f64, grad: &mut [f64]) -> f64 {
        let t = self.forward(x);
        let (h, w) = (self.height, self.width);
        let nf = self.features();
        let dense_off = CONV_W + FILTERS;
        let dense_w = &self.params[dense_off..dense_off + CLASSES * nf];

        let probs = softmax(&t.logits);
        let loss = -log_softmax(&t.logits)[label as usize];
        let mut dlogits = probs;
        dlogits[label as usize] -= 1.0;
        for d in &mut dlogits {
            *d *= scale;
        }

        let (g_conv, g_rest) = grad.split_at_mut(CONV_W);
        let (g_conv_b, g_rest) = g_rest.split_at_mut(FILTERS);
        let (g_dense_w, g_dense_b) = g_rest.split_at_mut(CLASSES * nf);
        for c in 0..CLASSES {
            g_dense_b[c] += dlogits[c];
            let g_row = &mut g_dense_w[c * nf..(c + 1) * nf];
            for (g, a) in g_row.iter_mut().zip(&t.pooled) {
                *g += dlogits[c] * a;
            }
        }

        // Route the pooled gradient back to the winning (pre-ReLU) conv cell.
        let mut dconv = vec![0.0; FILTERS * h * w];
        for k in 0..nf {
            let idx = t.argmax[k];
            if t.conv[idx] > 0.0 {
                dconv[idx] += (0..CLASSES).map(|c| dense_w[c * nf + k] * dlogits[c]).sum::<f64>();
            }
        }

        for f in 0..FILTERS {
            let d = &dconv[f * h * w..(f + 1) * h * w];
            let gk = &mut g_conv[f * 9..f * 9 + 9];
            for i in 0..h {
                for j in 0..w {
                    let dz = d[i * w + j];
                    if dz == 0.0 {
                        continue;
                    }
                    g_conv_b[f] += dz;
                    for di in 0..KERNEL {
                        let ii = i + di;
                        if ii == 0 || ii > h {
                            continue;
                        }
                        for dj in 0..KERNEL {
                            let jj = j + dj;
                            if jj == 0 || jj > w {
                                continue;
                            }
                            gk[di * KERNEL + dj] += dz * x[(ii - 1) * w + jj - 1];
                        }
                    }
                }
            }
        }
        loss
    }

    /// Mean cross-entropy over a batch and its exact gradient.
    ///
    /// Panics if the batch is empty or `inputs` and `labels` differ in length.
    pub fn loss_and_gradients(&self, inputs: &[&[f64]], labels: &[u8]) -> (f64, Vec<f64>) {
        assert!(!inputs.is_empty(), "empty batch");
        assert_eq!(inputs.len(), labels.len(), "inputs/labels length mismatch");
        let scale = 1.0 / inputs.len() as f64;
        let mut grad = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            loss += self.backprop_into(x, y, scale, &mut grad);
        }
        (loss * scale, grad)
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, inputs: &[&[f64]], labels: &[u8]) -> f64 {
        assert!(!inputs.is_empty(), "empty batch");
        let total: f64 = inputs
            .iter()
            .zip(labels)
            .map(|(x, &y)| -log_softmax(&self.logits(x))[y as usize])
            .sum();
        total / inputs.len() as f64
    }

    /// For each pooled feature, the conv cell that won the max-pool, or
    /// `None` when the winner is clipped by the ReLU. Two parameter settings
    /// with equal routes for an input lie on the same smooth piece of the
    /// loss surface for that input.
    pub fn pool_routes(&self, x: &[f64]) -> Vec<Option<usize>> {
        let t = self.forward(x);
        t.argmax
            .iter()
            .map(|&i| (t.conv[i] > 0.0).then_some(i))
            .collect()
    }

    /// Re-draws all parameters uniformly in `[-scale, scale]`; used to probe
    /// gradients away from the initialization.
    pub fn randomize(&mut self, seed: u64, scale: f64) {
        let mut rng = rng::seeded(seed);
        for p in &mut self.params {
            *p = scale * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
}

fn model_features(h: usize, w: usize) -> usize {
    FILTERS * (h / 2) * (w / 2)
}

fn log_softmax(l: &[f64; CLASSES]) -> [f64; CLASSES] {
    let max = l[0].max(l[1]);
    let lse = max + ((l[0] - max).exp() + (l[1] - max).exp()).ln();
    [l[0] - lse, l[1] - lse]
}

fn softmax(l: &[f64; CLASSES]) -> [f64; CLASSES] {
    let ls = log_softmax(l);
    [ls[0].exp(), ls[1].exp()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_layer_shapes() {
        let m = Cnn::new((28, 28), 1).unwrap();
        let w = m.weights();
        let shapes: Vec<_> = w.layers.iter().map(|t| (t.name.as_str(), t.shape.clone())).collect();
        assert_eq!(
            shapes,
            vec![
                ("conv.weight", vec![8, 1, 3, 3]),
                ("conv.bias", vec![8]),
                ("dense.weight", vec![2, 8 * 14 * 14]),
                ("dense.bias", vec![2]),
            ]
        );
        assert_eq!(w.param_count(), 72 + 8 + 2 * 1568 + 2);
    }

    #[test]
    fn same_seed_same_model() {
        assert_eq!(Cnn::new((12, 10), 5).unwrap(), Cnn::new((12, 10), 5).unwrap());
        assert_ne!(Cnn::new((12, 10), 5).unwrap(), Cnn::new((12, 10), 6).unwrap());
    }

    #[test]
    fn too_small_is_config_error() {
        assert!(matches!(Cnn::new((4, 4), 1), Err(Error::Config(_))));
        assert!(Cnn::new((8, 8), 1).is_ok());
    }

    #[test]
    fn zero_weights_give_uniform_output_and_class_zero() {
        let mut m = Cnn::new((8, 8), 1).unwrap();
        m.params_mut().fill(0.0);
        let x = vec![0.7; 64];
        assert_eq!(m.logits(&x), [0.0, 0.0]);
        assert_eq!(m.predict(&x), 0);
        let loss = m.loss(&[&x, &x], &[0, 1]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn snapshot_from_other_shape_is_rejected() {
        let small = Cnn::new((8, 8), 1).unwrap();
        let mut big = Cnn::new((10, 10), 1).unwrap();
        assert!(big.set_weights(&small.weights()).is_err());
    }

    #[test]
    fn odd_sides_pool_by_floor() {
        let m = Cnn::new((9, 11), 3).unwrap();
        assert_eq!(m.features(), 8 * 4 * 5);
        let x = vec![0.5; 99];
        assert!(m.logits(&x).iter().all(|v| v.is_finite()));
    }
}
