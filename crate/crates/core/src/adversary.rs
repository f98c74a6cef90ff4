//! The adversary's scoring of a candidate perturbation.
//!
//! A perturbation `a` is one vector added to every image. Its payoff against
//! frozen weights is `1 + e - c`, where `e = 1 - recall` on the perturbed
//! training data and `c = ||a||_2`. The swarm minimizes the fitness `-payoff`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{self, Cnn, Dataset, ModelWeights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffBreakdown {
    /// L2 norm of the raw perturbation.
    pub cost: f64,
    /// Positive-class recall on the perturbed data.
    pub recall: f64,
    /// `1 - recall`.
    pub error: f64,
    /// `1 + error - cost`.
    pub payoff: f64,
}

impl PayoffBreakdown {
    pub fn new(cost: f64, recall: f64) -> Self {
        let error = 1.0 - recall;
        Self {
            cost,
            recall,
            error,
            payoff: 1.0 + error - cost,
        }
    }

    pub fn fitness(&self) -> f64 {
        -self.payoff
    }
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_len(a: &[f64], data: &Dataset) -> Result<()> {
    if a.len() != data.m() {
        return Err(Error::DimensionMismatch {
            what: "perturbation length",
            expected: data.m(),
            found: a.len(),
        });
    }
    Ok(())
}

/// Recall of a frozen model on `X + a`, without materializing `X + a`.
fn perturbed_recall(model: &Cnn, data: &Dataset, a: &[f64]) -> f64 {
    use rayon::prelude::*;
    let preds: Vec<u8> = (0..data.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; data.m()],
            |buf, i| {
                for ((b, x), d) in buf.iter_mut().zip(data.row(i)).zip(a) {
                    *b = x + d;
                }
                model.predict(buf)
            },
        )
        .collect();
    learner::Metrics::from_labels(data.labels(), &preds).recall
}

/// Scores `a` against `weights` on `data`.
///
/// `model` supplies the architecture; the weights are loaded into a private
/// copy, so the caller's model is left untouched.
pub fn payoff(a: &[f64], weights: &ModelWeights, data: &Dataset, model: &Cnn) -> Result<PayoffBreakdown> {
    check_len(a, data)?;
    let cost = l2_norm(a);
    let mut frozen = model.clone();
    frozen.set_weights(weights)?;
    let adversarial = data.perturbed(a)?;
    let recall = learner::evaluate(&frozen, &adversarial).recall;
    Ok(PayoffBreakdown::new(cost, recall))
}

/// `-payoff(a, ...)`.
pub fn fitness(a: &[f64], weights: &ModelWeights, data: &Dataset, model: &Cnn) -> Result<f64> {
    Ok(payoff(a, weights, data, model)?.fitness())
}

/// Fitness bound to frozen weights and data, shareable across threads.
#[derive(Clone, Debug)]
pub struct AdversaryFitness {
    model: Arc<Cnn>,
    data: Arc<Dataset>,
}

impl AdversaryFitness {
    pub fn new(weights: &ModelWeights, data: Arc<Dataset>, architecture: &Cnn) -> Result<Self> {
        if architecture.shape() != data.shape() {
            return Err(Error::config(format!(
                "model shape {:?} does not match data shape {:?}",
                architecture.shape(),
                data.shape()
            )));
        }
        let mut model = architecture.clone();
        model.set_weights(weights)?;
        Ok(Self {
            model: Arc::new(model),
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.m()
    }

    pub fn breakdown(&self, a: &[f64]) -> Result<PayoffBreakdown> {
        check_len(a, &self.data)?;
        Ok(PayoffBreakdown::new(
            l2_norm(a),
            perturbed_recall(&self.model, &self.data, a),
        ))
    }

    /// Panics if `a` has the wrong length.
    pub fn evaluate(&self, a: &[f64]) -> f64 {
        self.breakdown(a)
            .unwrap_or_else(|e| panic!("adversary fitness: {e}"))
            .fitness()
    }
}

/// Closure form of [`AdversaryFitness`] for [`crate::swarm::optimize`].
pub fn make_swarm_fitness(
    weights: &ModelWeights,
    data: Arc<Dataset>,
    architecture: &Cnn,
) -> Result<impl Fn(&[f64]) -> f64 + Sync + Send + Clone> {
    let f = AdversaryFitness::new(weights, data, architecture)?;
    Ok(move |a: &[f64]| f.evaluate(a))
}
