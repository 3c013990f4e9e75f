//! Black-box classifier contract, the built-in reference CNN, and the
//! external-process adapter.

mod cnn;
mod external;

pub use cnn::{train_reference, CnnTrainConfig, ReferenceCnn};
pub use external::ExternalModel;

use crate::error::Result;

/// Where a classifier lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Builtin,
    External,
}

/// A classifier usable as an attribution target: maps a series to a
/// probability vector over classes (entries non-negative, summing to one
/// within 1e-6).
pub trait Classifier {
    fn kind(&self) -> ClassifierKind;

    /// Number of classes, once known.
    fn num_classes(&self) -> usize;

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Batched prediction; the default loops over instances.
    fn predict_proba_batch(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }

    /// Human-readable description for logs.
    fn describe(&self) -> String;
}

/// Argmax class index (smallest index on ties).
pub fn argmax_class(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
