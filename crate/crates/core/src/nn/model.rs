//! Feed-forward classifier with exact analytic gradients.
//!
//! The network flattens its `H×W×C` input and applies a stack of dense
//! layers and element-wise activations. The final two layers are always
//! `Dense(num_classes)` and `Sigmoid`, so every class gets an independent
//! probability suitable for multi-label binary cross-entropy.
//!
//! Inputs are shifted by [`INPUT_CENTER`] before the first layer so that
//! pixel data in `[0, 1]` is roughly zero-mean. Dense weights are row-major
//! with shape `(out_dim, in_dim)`.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::loss::{bce_loss, sigmoid};
use crate::nn::tensor::Tensor;
use crate::NUM_BASIC;

/// Subtracted from every input value.
pub const INPUT_CENTER: f64 = 0.5;
/// Smallest probability `forward` will emit.
pub const PROB_MIN: f64 = f64::MIN_POSITIVE;
/// Largest probability `forward` will emit (the float just below 1).
pub const PROB_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Dense(usize),
    Relu,
    Sigmoid,
}

/// Architecture of the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `(height, width, channels)`.
    pub input_dims: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl ModelSpec {
    /// `Dense(h)-ReLU` for each hidden width, then `Dense(6)-Sigmoid`.
    pub fn mlp(input_dims: [usize; 3], hidden: &[usize]) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() * 2 + 2);
        for &h in hidden {
            layers.push(LayerSpec::Dense(h));
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Dense(NUM_BASIC));
        layers.push(LayerSpec::Sigmoid);
        let spec = Self {
            input_dims,
            layers,
            num_classes: NUM_BASIC,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The default desk-scale architecture: `Dense(128)-ReLU-Dense(64)-ReLU-Dense(6)-Sigmoid`.
    pub fn default_for(resolution: usize, channels: usize) -> Self {
        Self::mlp([resolution, resolution, channels], &[128, 64])
            .expect("default architecture is valid")
    }

    pub fn input_len(&self) -> usize {
        self.input_dims.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len() == 0 {
            return config_err("input dims must be nonzero");
        }
        if self.num_classes != NUM_BASIC {
            return config_err(format!(
                "num_classes must be {NUM_BASIC}, got {}",
                self.num_classes
            ));
        }
        let n = self.layers.len();
        if n < 2
            || self.layers[n - 1] != LayerSpec::Sigmoid
            || self.layers[n - 2] != LayerSpec::Dense(self.num_classes)
        {
            return config_err("model must end with Dense(num_classes) followed by Sigmoid");
        }
        let dense = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Dense(_)))
            .count();
        if dense < 2 {
            return config_err("model needs at least one hidden layer");
        }
        if self
            .layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Dense(0)))
        {
            return config_err("dense layers must have at least one unit");
        }
        Ok(())
    }

    /// `(in_dim, out_dim)` of every dense layer, in order.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut width = self.input_len();
        let mut shapes = Vec::new();
        for layer in &self.layers {
            if let LayerSpec::Dense(out) = *layer {
                shapes.push((width, out));
                width = out;
            }
        }
        shapes
    }

    pub fn num_params(&self) -> usize {
        self.dense_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Learnable parameters of one dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }
}

/// Parameters for every dense layer of a [`ModelSpec`]. Gradients use the
/// same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub dense: Vec<DenseParams>,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelState;

impl ModelState {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            dense: spec
                .dense_shapes()
                .into_iter()
                .map(|(i, o)| DenseParams::zeros(i, o))
                .collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = Self::zeros(spec);
        for layer in &mut state.dense {
            let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            for w in &mut layer.weights {
                *w = dist.sample(&mut rng);
            }
        }
        state
    }

    pub fn check_matches(&self, spec: &ModelSpec) -> Result<()> {
        let expected = spec.dense_shapes();
        let actual: Vec<_> = self.dense.iter().map(|d| (d.in_dim, d.out_dim)).collect();
        let consistent = self.dense.iter().all(|d| {
            d.weights.len() == d.in_dim * d.out_dim && d.bias.len() == d.out_dim
        });
        if expected != actual || !consistent {
            return Err(Error::Shape {
                expected: expected.iter().flat_map(|&(i, o)| [o, i]).collect(),
                actual: actual.iter().flat_map(|&(i, o)| [o, i]).collect(),
            });
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.dense
            .iter()
            .map(|d| d.weights.len() + d.bias.len())
            .sum()
    }

    /// Every parameter in canonical order: each layer's weights, then its bias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.dense
            .iter()
            .flat_map(|d| d.weights.iter().chain(d.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.dense
            .iter_mut()
            .flat_map(|d| d.weights.iter_mut().chain(d.bias.iter_mut()))
    }

    /// Mutable access to the parameter at a flat canonical index.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for d in &mut self.dense {
            let nw = d.weights.len();
            if index < nw {
                return &mut d.weights[index];
            }
            index -= nw;
            if index < d.bias.len() {
                return &mut d.bias[index];
            }
            index -= d.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, index: usize) -> f64 {
        self.iter().nth(index).copied().expect("parameter index out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &ModelState, scale: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }
}

/// Intermediate values kept from a forward pass.
///
/// `acts[0]` is the flattened input and `acts[k + 1]` is the output of layer `k`.
struct Trace {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

fn check_batch(spec: &ModelSpec, batch: &Tensor) -> Result<usize> {
    let shape = batch.shape();
    let flat_ok = shape.len() == 2 && shape[1] == spec.input_len();
    let image_ok = shape.len() == 4 && shape[1..] == spec.input_dims;
    if !(flat_ok || image_ok) {
        let [h, w, c] = spec.input_dims;
        return Err(Error::Shape {
            expected: vec![shape.first().copied().unwrap_or(0), h, w, c],
            actual: shape.to_vec(),
        });
    }
    Ok(shape[0])
}

fn dense_forward(p: &DenseParams, input: &[f64], batch: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * p.out_dim];
    for b in 0..batch {
        let x = &input[b * p.in_dim..(b + 1) * p.in_dim];
        let y = &mut out[b * p.out_dim..(b + 1) * p.out_dim];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &p.weights[o * p.in_dim..(o + 1) * p.in_dim];
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            *yo = dot + p.bias[o];
        }
    }
    out
}

fn check_finite(values: &[f64], layer: usize, what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            layer,
            what: what.to_string(),
        })
    }
}

fn trace(spec: &ModelSpec, state: &ModelState, batch: &Tensor) -> Result<Trace> {
    spec.validate()?;
    state.check_matches(spec)?;
    let n = check_batch(spec, batch)?;
    let mut acts = Vec::with_capacity(spec.layers.len() + 1);
    acts.push(batch.data().iter().map(|v| v - INPUT_CENTER).collect::<Vec<f64>>());
    let mut dense_idx = 0;
    for (k, layer) in spec.layers.iter().enumerate() {
        let input = acts.last().expect("input present");
        let out = match layer {
            LayerSpec::Dense(_) => {
                let out = dense_forward(&state.dense[dense_idx], input, n);
                dense_idx += 1;
                out
            }
            LayerSpec::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
            LayerSpec::Sigmoid => input.iter().map(|&v| sigmoid(v)).collect(),
        };
        check_finite(&out, k, "forward activation")?;
        acts.push(out);
    }
    Ok(Trace { batch: n, acts })
}

/// Per-class probabilities for a batch, shape `[B, 6]`.
///
/// Outputs are clamped to `[PROB_MIN, PROB_MAX]` so they stay strictly
/// inside `(0, 1)` even when a logit saturates.
pub fn forward(spec: &ModelSpec, state: &ModelState, batch: &Tensor) -> Result<Tensor> {
    let t = trace(spec, state, batch)?;
    let probs = t
        .acts
        .last()
        .expect("output present")
        .iter()
        .map(|p| p.clamp(PROB_MIN, PROB_MAX))
        .collect();
    Tensor::new(vec![t.batch, spec.num_classes], probs)
}

/// Pre-sigmoid outputs of the final dense layer, shape `[B, 6]`.
pub fn logits(spec: &ModelSpec, state: &ModelState, batch: &Tensor) -> Result<Tensor> {
    let mut t = trace(spec, state, batch)?;
    let n = t.acts.len();
    let z = t.acts.swap_remove(n - 2);
    Tensor::new(vec![t.batch, spec.num_classes], z)
}

fn check_labels(labels: &Tensor, batch: usize, classes: usize) -> Result<()> {
    if labels.shape() != [batch, classes] {
        return Err(Error::Shape {
            expected: vec![batch, classes],
            actual: labels.shape().to_vec(),
        });
    }
    if labels.data().iter().any(|y| !(0.0..=1.0).contains(y)) {
        return config_err("labels must lie in [0, 1]");
    }
    Ok(())
}

/// Gradient of the mean multi-label BCE loss with respect to every parameter.
///
/// The loss is evaluated on logits, so the output-layer error term is
/// exactly `(sigmoid(z) - y) / B`.
pub fn backward(
    spec: &ModelSpec,
    state: &ModelState,
    batch: &Tensor,
    labels: &Tensor,
) -> Result<Gradients> {
    let t = trace(spec, state, batch)?;
    check_labels(labels, t.batch, spec.num_classes)?;
    backward_traced(spec, state, &t, labels)
}

/// Mean BCE loss of the batch together with its gradient, from one forward pass.
pub fn loss_and_backward(
    spec: &ModelSpec,
    state: &ModelState,
    batch: &Tensor,
    labels: &Tensor,
) -> Result<(f64, Gradients)> {
    let t = trace(spec, state, batch)?;
    check_labels(labels, t.batch, spec.num_classes)?;
    let probs = t
        .acts
        .last()
        .expect("output present")
        .iter()
        .map(|p| p.clamp(PROB_MIN, PROB_MAX))
        .collect();
    let loss = bce_loss(&Tensor::new(vec![t.batch, spec.num_classes], probs)?, labels)?;
    Ok((loss, backward_traced(spec, state, &t, labels)?))
}

fn backward_traced(spec: &ModelSpec, state: &ModelState, t: &Trace, labels: &Tensor) -> Result<Gradients> {
    let n = t.batch;
    let last = spec.layers.len() - 1;
    let inv_n = 1.0 / n as f64;

    // Error term at the final logits.
    let logits = &t.acts[last];
    let mut delta: Vec<f64> = logits
        .iter()
        .zip(labels.data())
        .map(|(&z, &y)| (sigmoid(z) - y) * inv_n)
        .collect();

    let mut grads = ModelState::zeros(spec);
    let mut dense_idx = state.dense.len();
    for k in (0..last).rev() {
        match spec.layers[k] {
            LayerSpec::Dense(_) => {
                dense_idx -= 1;
                let p = &state.dense[dense_idx];
                let g = &mut grads.dense[dense_idx];
                let x = &t.acts[k];
                for b in 0..n {
                    let xb = &x[b * p.in_dim..(b + 1) * p.in_dim];
                    let db = &delta[b * p.out_dim..(b + 1) * p.out_dim];
                    for (o, &d) in db.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        g.bias[o] += d;
                        let row = &mut g.weights[o * p.in_dim..(o + 1) * p.in_dim];
                        for (w, &v) in row.iter_mut().zip(xb) {
                            *w += d * v;
                        }
                    }
                }
                if k == 0 {
                    break;
                }
                let mut prev = vec![0.0; n * p.in_dim];
                for b in 0..n {
                    let db = &delta[b * p.out_dim..(b + 1) * p.out_dim];
                    let pb = &mut prev[b * p.in_dim..(b + 1) * p.in_dim];
                    for (o, &d) in db.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = &p.weights[o * p.in_dim..(o + 1) * p.in_dim];
                        for (acc, &w) in pb.iter_mut().zip(row) {
                            *acc += d * w;
                        }
                    }
                }
                delta = prev;
            }
            LayerSpec::Relu => {
                for (d, &x) in delta.iter_mut().zip(&t.acts[k]) {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            LayerSpec::Sigmoid => {
                for (d, &s) in delta.iter_mut().zip(&t.acts[k + 1]) {
                    *d *= s * (1.0 - s);
                }
            }
        }
        check_finite(&delta, k, "backward error term")?;
    }
    Ok(grads)
}

/// Batch-parallel [`backward`]: rows are split into `chunks` contiguous
/// pieces, each piece is differentiated independently and the results are
/// combined weighted by piece size.
///
/// The reduction order differs from the single-pass version, so results are
/// only bit-reproducible for a fixed `chunks`.
pub fn backward_chunked(
    spec: &ModelSpec,
    state: &ModelState,
    batch: &Tensor,
    labels: &Tensor,
    chunks: usize,
) -> Result<Gradients> {
    Ok(loss_and_backward_chunked(spec, state, batch, labels, chunks)?.1)
}

/// [`loss_and_backward`] split the same way as [`backward_chunked`].
pub fn loss_and_backward_chunked(
    spec: &ModelSpec,
    state: &ModelState,
    batch: &Tensor,
    labels: &Tensor,
    chunks: usize,
) -> Result<(f64, Gradients)> {
    let n = check_batch(spec, batch)?;
    if chunks <= 1 || n < 2 {
        return loss_and_backward(spec, state, batch, labels);
    }
    let chunks = chunks.min(n);
    let row = batch.row_len();
    let classes = spec.num_classes;
    let bounds: Vec<(usize, usize)> = (0..chunks)
        .map(|c| (c * n / chunks, (c + 1) * n / chunks))
        .collect();
    let parts: Vec<Result<(usize, f64, Gradients)>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut shape = batch.shape().to_vec();
            shape[0] = hi - lo;
            let x = Tensor::new(shape, batch.data()[lo * row..hi * row].to_vec())?;
            let y = Tensor::new(
                vec![hi - lo, classes],
                labels.data()[lo * classes..hi * classes].to_vec(),
            )?;
            let (loss, g) = loss_and_backward(spec, state, &x, &y)?;
            Ok((hi - lo, loss, g))
        })
        .collect();
    let mut total = ModelState::zeros(spec);
    let mut loss = 0.0;
    for part in parts {
        let (len, l, g) = part?;
        let w = len as f64 / n as f64;
        total.add_scaled(&g, w);
        loss += l * w;
    }
    Ok((loss, total))
}
