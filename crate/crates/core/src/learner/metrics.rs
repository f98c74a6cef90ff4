//! Binary classification metrics with label 1 as the positive class.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    /// Panics if the slices differ in length.
    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "label/prediction length mismatch");
        let mut cm = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == 1, p == 1) {
                (true, true) => cm.tp += 1,
                (false, true) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (true, false) => cm.fn_ += 1,
            }
        }
        cm
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Recall, precision and F1 of the positive class. Undefined ratios (zero
/// denominators) are reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let recall = ratio(confusion.tp, confusion.tp + confusion.fn_);
        let precision = ratio(confusion.tp, confusion.tp + confusion.fp);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            recall,
            precision,
            f1,
            confusion,
        }
    }

    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Self {
        Self::from_confusion(ConfusionMatrix::from_labels(truth, predicted))
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.confusion.tp + self.confusion.tn, self.confusion.total())
    }
}
