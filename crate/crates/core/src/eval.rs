//! Compound inference and the 7-class macro-F1 metric.
//!
//! The model only outputs 6 independent basic-class probabilities. A compound
//! decision sums the two constituent probabilities of every catalog entry and
//! takes the argmax, ties going to the lowest catalog index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::dataset::Sample;
use crate::data::labels::CompoundCatalog;
use crate::error::{config_err, Result};
use crate::nn::{forward, ModelSpec, ModelState, Tensor};
use crate::{NUM_BASIC, NUM_COMPOUND};

/// Samples forwarded per model call during evaluation.
const EVAL_CHUNK: usize = 256;

/// Basic-class probabilities for one `H×W×C` image.
pub fn predict_basic(spec: &ModelSpec, state: &ModelState, image: &Tensor) -> Result<[f64; NUM_BASIC]> {
    let batch = Tensor::stack(std::iter::once(image))?;
    let p = forward(spec, state, &batch)?;
    let mut out = [0.0; NUM_BASIC];
    out.copy_from_slice(p.row(0));
    Ok(out)
}

/// Returns the winning catalog index and every entry's summed score.
pub fn constrain_to_compound(p: &[f64], catalog: &CompoundCatalog) -> (usize, Vec<f64>) {
    let scores: Vec<f64> = catalog.entries().iter().map(|e| e.score(p)).collect();
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    (best, scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
    /// No ground-truth samples of this class; its F1 is 0 by convention.
    pub zero_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_samples: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Builds metrics from ground-truth and predicted catalog indices. The
    /// macro average always divides by the catalog size.
    pub fn from_predictions(targets: &[usize], predictions: &[usize], catalog: &CompoundCatalog) -> Result<Self> {
        if targets.is_empty() {
            return config_err("evaluation set is empty");
        }
        if targets.len() != predictions.len() {
            return config_err(format!(
                "{} targets but {} predictions",
                targets.len(),
                predictions.len()
            ));
        }
        let k = catalog.len();
        if let Some(&bad) = targets.iter().chain(predictions).find(|&&i| i >= k) {
            return config_err(format!("class index {bad} outside the {k}-entry catalog"));
        }
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in targets.iter().zip(predictions) {
            confusion[t][p] += 1;
        }
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    name: catalog.entries()[c].name.to_string(),
                    precision,
                    recall,
                    f1,
                    support,
                    predicted,
                    zero_support: support == 0,
                }
            })
            .collect();
        let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / k as f64;
        let correct = (0..k).map(|c| confusion[c][c]).sum();
        Ok(Self {
            per_class,
            macro_f1,
            accuracy: ratio(correct, targets.len()),
            confusion,
            n_samples: targets.len(),
        })
    }

    pub fn per_class_f1(&self) -> Vec<f64> {
        self.per_class.iter().map(|c| c.f1).collect()
    }

    pub fn zero_support_classes(&self) -> Vec<&str> {
        self.per_class
            .iter()
            .filter(|c| c.zero_support)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Pairs compound samples with the catalog entry holding most of their
/// label mass. Samples with fewer than two positive classes are skipped.
pub fn compound_targets(samples: &[Sample], catalog: &CompoundCatalog) -> Vec<(Sample, usize)> {
    samples
        .iter()
        .filter(|s| s.label.support().len() >= 2)
        .map(|s| (s.clone(), catalog.dominant_entry(&s.label)))
        .collect()
}

/// Predicted catalog indices for every item, in order.
pub fn predict_compound(
    spec: &ModelSpec,
    state: &ModelState,
    images: &[&Tensor],
    catalog: &CompoundCatalog,
) -> Result<Vec<usize>> {
    let chunks: Vec<Result<Vec<usize>>> = images
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let p = forward(spec, state, &Tensor::stack(chunk.iter().copied())?)?;
            Ok((0..p.rows())
                .map(|i| constrain_to_compound(p.row(i), catalog).0)
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(images.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Scores a model on samples carrying ground-truth catalog indices.
pub fn evaluate(
    spec: &ModelSpec,
    state: &ModelState,
    eval_set: &[(Sample, usize)],
    catalog: &CompoundCatalog,
) -> Result<Metrics> {
    if eval_set.is_empty() {
        return config_err("evaluation set is empty");
    }
    debug_assert_eq!(catalog.len(), NUM_COMPOUND);
    let images: Vec<&Tensor> = eval_set.iter().map(|(s, _)| &s.image).collect();
    let targets: Vec<usize> = eval_set.iter().map(|(_, t)| *t).collect();
    let preds = predict_compound(spec, state, &images, catalog)?;
    Metrics::from_predictions(&targets, &preds, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let cat = CompoundCatalog::standard();
        let p = [0.1, 0.05, 0.7, 0.02, 0.2, 0.6];
        let (k, scores) = constrain_to_compound(&p, &cat);
        assert_eq!(cat.entries()[k].name, "Fearfully Surprised");
        let expected = [1.3, 0.62, 0.8, 0.65, 0.7, 0.9, 0.3];
        for (s, e) in scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-12, "{s} vs {e}");
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cat = CompoundCatalog::standard();
        assert_eq!(constrain_to_compound(&[0.5; 6], &cat).0, 0);
    }

    #[test]
    fn one_hot_surprise_picks_a_surprised_class() {
        let cat = CompoundCatalog::standard();
        let (k, _) = constrain_to_compound(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0], &cat);
        assert!(cat.entries()[k].name.ends_with("Surprised"));
    }

    #[test]
    fn perfect_predictions() {
        let cat = CompoundCatalog::standard();
        let t: Vec<usize> = (0..14).map(|i| i % 7).collect();
        let m = Metrics::from_predictions(&t, &t, &cat).unwrap();
        assert_eq!(m.macro_f1, 1.0);
        assert!(m.zero_support_classes().is_empty());
    }

    #[test]
    fn missing_class_counts_in_denominator() {
        let cat = CompoundCatalog::standard();
        let t: Vec<usize> = (0..6).collect();
        let m = Metrics::from_predictions(&t, &t, &cat).unwrap();
        assert_eq!(m.per_class_f1(), vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        assert!((m.macro_f1 - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(m.zero_support_classes(), vec!["Sadly Angry"]);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let cat = CompoundCatalog::standard();
        assert!(Metrics::from_predictions(&[], &[], &cat).is_err());
        assert!(Metrics::from_predictions(&[0], &[0, 1], &cat).is_err());
        assert!(Metrics::from_predictions(&[7], &[0], &cat).is_err());
    }

    #[test]
    fn json_has_seven_classes() {
        let cat = CompoundCatalog::standard();
        let m = Metrics::from_predictions(&[0, 1], &[0, 2], &cat).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["per_class"].as_array().unwrap().len(), 7);
    }
}
