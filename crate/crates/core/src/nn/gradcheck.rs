//! Finite-difference verification of [`backward`](crate::nn::model::backward).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{config_err, Result};
use crate::loss::bce_with_logits;
use crate::nn::model::{backward, logits, Gradients, ModelSpec, ModelState};
use crate::nn::tensor::Tensor;

/// Models with more parameters than this are checked on a seeded random subset.
pub const FULL_CHECK_LIMIT: usize = 5_000;
/// Size of the subset used above [`FULL_CHECK_LIMIT`].
pub const SUBSET_SIZE: usize = 2_000;
/// Relative errors are computed against `max(|analytic|, |numeric|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Flat index of the parameter with the largest error.
    pub worst_param: usize,
    pub checked: usize,
    pub pass: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn loss_at(spec: &ModelSpec, state: &ModelState, batch: &Tensor, labels: &Tensor) -> Result<f64> {
    bce_with_logits(&logits(spec, state, batch)?, labels)
}

/// Compares `backward` against central differences with step `eps`.
pub fn grad_check(
    spec: &ModelSpec,
    state: &ModelState,
    batch: &Tensor,
    labels: &Tensor,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let analytic = backward(spec, state, batch, labels)?;
    grad_check_against(spec, state, batch, labels, &analytic, eps, tol)
}

/// Like [`grad_check`] but with a caller-supplied analytic gradient.
pub fn grad_check_against(
    spec: &ModelSpec,
    state: &ModelState,
    batch: &Tensor,
    labels: &Tensor,
    analytic: &Gradients,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return config_err(format!("grad_check eps must lie in (0, 1e-2], got {eps}"));
    }
    let n = state.num_params();
    let indices: Vec<usize> = if n > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut picked = index::sample(&mut rng, n, SUBSET_SIZE).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..n).collect()
    };

    let analytic_flat: Vec<f64> = analytic.iter().copied().collect();
    let mut probe = state.clone();
    let mut max_rel_err = 0.0_f64;
    let mut worst_param = 0;
    for &i in &indices {
        let orig = state.param(i);
        *probe.param_mut(i) = orig + eps;
        let up = loss_at(spec, &probe, batch, labels)?;
        *probe.param_mut(i) = orig - eps;
        let down = loss_at(spec, &probe, batch, labels)?;
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic_flat[i], numeric);
        if err > max_rel_err || err.is_nan() {
            max_rel_err = err;
            worst_param = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst_param,
        checked: indices.len(),
        pass: max_rel_err <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ModelSpec, ModelState, Tensor, Tensor) {
        let spec = ModelSpec::mlp([3, 3, 1], &[5, 4]).unwrap();
        let state = ModelState::init(&spec, 21);
        let x = Tensor::new(vec![4, 3, 3, 1], (0..36).map(|i| ((i * 7) % 11) as f64 / 11.0).collect())
            .unwrap();
        let y = Tensor::new(vec![4, 6], (0..24).map(|i| ((i * 5) % 7 < 3) as u8 as f64).collect())
            .unwrap();
        (spec, state, x, y)
    }

    #[test]
    fn correct_gradient_passes() {
        let (spec, state, x, y) = setup();
        let r = grad_check(&spec, &state, &x, &y, 1e-5, 1e-4).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.checked, spec.num_params());
    }

    #[test]
    fn sign_flip_fails() {
        let (spec, state, x, y) = setup();
        let mut g = backward(&spec, &state, &x, &y).unwrap();
        for v in &mut g.dense[1].weights {
            *v = -*v;
        }
        let r = grad_check_against(&spec, &state, &x, &y, &g, 1e-5, 1e-4).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn eps_precondition() {
        let (spec, state, x, y) = setup();
        assert!(grad_check(&spec, &state, &x, &y, 0.0, 1e-4).is_err());
        assert!(grad_check(&spec, &state, &x, &y, 0.1, 1e-4).is_err());
    }

    #[test]
    fn large_models_use_a_subset() {
        let spec = ModelSpec::mlp([8, 8, 3], &[32]).unwrap();
        assert!(spec.num_params() > FULL_CHECK_LIMIT);
        let state = ModelState::init(&spec, 2);
        let x = Tensor::new(vec![2, 8, 8, 3], (0..384).map(|i| (i as f64 * 0.13).cos()).collect())
            .unwrap();
        let mut labels = vec![0.0; 12];
        labels[2] = 1.0;
        labels[11] = 1.0;
        let y = Tensor::new(vec![2, 6], labels).unwrap();
        let r = grad_check(&spec, &state, &x, &y, 1e-5, 1e-4).unwrap();
        assert_eq!(r.checked, SUBSET_SIZE);
        assert!(r.pass, "{r:?}");
    }
}
