//! Shapelet-driven segment-level attribution for black-box time-series
//! classifiers.
//!
//! The pipeline: learn a small bank of discriminative shapelets
//! ([`sdd`]), segment a series by shapelet activation ([`attribution`]),
//! perturb segments with a linear-interpolation baseline, and attribute
//! per-segment Shapley values against any classifier implementing
//! [`model::Classifier`]. [`synth`] generates motif-insertion benchmarks with
//! ground-truth saliency and [`eval`] scores saliency maps (AUPRC/AUP/AUR)
//! and runs the occlusion protocol.

pub mod attribution;
pub mod data;
pub mod error;
pub mod eval;
pub mod jsonfmt;
pub mod model;
pub mod plot;
pub mod sdd;
pub mod synth;

pub use error::{Error, Result};
