//! Multi-label binary cross-entropy.
//!
//! `L = -(1/N) Σ_i Σ_c [y_ic ln p_ic + (1 - y_ic) ln(1 - p_ic)]`
//!
//! Labels may be soft (any value in `[0, 1]`); the sum is evaluated as written.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_pair(p: &Tensor, y: &Tensor) -> Result<(usize, usize)> {
    if p.shape() != y.shape() || p.shape().len() != 2 {
        return Err(Error::Shape {
            expected: p.shape().to_vec(),
            actual: y.shape().to_vec(),
        });
    }
    if p.rows() == 0 {
        return Err(Error::Config("loss over an empty batch".into()));
    }
    Ok((p.shape()[0], p.shape()[1]))
}

/// Mean over samples of the summed per-class BCE, from probabilities.
pub fn bce_loss(p: &Tensor, y: &Tensor) -> Result<f64> {
    let (n, _) = check_pair(p, y)?;
    let mut total = 0.0;
    for (&pi, &yi) in p.data().iter().zip(y.data()) {
        let pc = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        if !(pc > 0.0 && pc < 1.0) {
            return Err(Error::Numeric {
                layer: 0,
                what: format!("probability {pi} outside (0, 1)"),
            });
        }
        total -= yi * pc.ln() + (1.0 - yi) * (-pc).ln_1p();
    }
    Ok(total / n as f64)
}

/// The same loss evaluated on logits: `Σ softplus(z) - y z`, averaged over rows.
pub fn bce_with_logits(z: &Tensor, y: &Tensor) -> Result<f64> {
    let (n, _) = check_pair(z, y)?;
    let total: f64 = z
        .data()
        .iter()
        .zip(y.data())
        .map(|(&zi, &yi)| softplus(zi) - yi * zi)
        .sum();
    if !total.is_finite() {
        return Err(Error::Numeric {
            layer: 0,
            what: "non-finite loss".into(),
        });
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probabilities_give_six_ln2() {
        let p = Tensor::filled(vec![1, 6], 0.5);
        let y = Tensor::new(vec![1, 6], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let l = bce_loss(&p, &y).unwrap();
        assert!((l - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l - 4.1589).abs() < 1e-4);
    }

    #[test]
    fn exact_binary_match_is_near_zero() {
        let y = Tensor::new(vec![2, 6], vec![1., 0., 0., 0., 0., 1., 0., 1., 0., 0., 0., 0.]).unwrap();
        let l = bce_loss(&y, &y).unwrap();
        // Clamping bounds each term by -ln(1 - 1e-7).
        assert!(l >= 0.0 && l < 6.0 * 1.1e-7);
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let z = Tensor::new(vec![1, 6], vec![-2.0, -0.5, 0.0, 0.3, 1.7, 4.0]).unwrap();
        let y = Tensor::new(vec![1, 6], vec![0.0, 1.0, 0.5, 0.2, 1.0, 0.0]).unwrap();
        let p = Tensor::new(vec![1, 6], z.data().iter().map(|&v| sigmoid(v)).collect()).unwrap();
        let a = bce_with_logits(&z, &y).unwrap();
        let b = bce_loss(&p, &y).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn nan_probability_is_numeric_error() {
        let p = Tensor::new(vec![1, 6], vec![f64::NAN, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        let y = Tensor::zeros(vec![1, 6]);
        assert!(matches!(bce_loss(&p, &y), Err(Error::Numeric { .. })));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        assert!(softplus(-1000.0) >= 0.0);
    }
}
