//! Curriculum training for compound facial expression recognition.
//!
//! A classifier is first trained on single-emotion images, then exposed to a
//! growing fraction of compound samples (natural, or synthesized with Mixup
//! and CutMix). Training uses multi-label binary cross-entropy over the six
//! basic emotions; inference maps the six probabilities onto seven compound
//! classes by summing constituent probabilities, and evaluation reports the
//! macro F1 over those seven classes.
//!
//! Module map:
//!
//! - [`nn`]: tensors, the MLP classifier, optimizers, gradient checking, checkpoints
//! - [`data`]: label taxonomy, manifest ingestion, image codecs, splits, synthetic glyphs
//! - [`augment`]: Mixup, CutMix, cutout and basic photometric/geometric augmentation
//! - [`curriculum`]: staged schedules, compound synthesis and batch sampling
//! - [`train`], [`eval`], [`sweep`]: the training loop, constrained inference and metrics, ablation sweeps
//! - [`config`]: the JSON run configuration

pub mod augment;
pub mod config;
pub mod curriculum;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod nn;
pub mod rng;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};

/// Number of trainable basic expression classes.
pub const NUM_BASIC: usize = 6;
/// Number of compound expression classes.
pub const NUM_COMPOUND: usize = 7;
