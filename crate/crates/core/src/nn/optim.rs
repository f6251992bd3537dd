//! First-order optimizers.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::nn::model::{Gradients, ModelState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient: `g + weight_decay * w`.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return config_err("learning_rate must be positive");
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return config_err(format!("{name} must lie in [0, 1)"));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return config_err("weight_decay must be nonnegative");
        }
        if !(self.eps > 0.0) {
            return config_err("eps must be positive");
        }
        Ok(())
    }
}

/// Optimizer moment buffers, persisted in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    /// Number of updates applied so far.
    pub t: u64,
    /// SGD velocity or Adam first moment.
    pub first: Option<ModelState>,
    /// Adam second moment.
    pub second: Option<ModelState>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            t: 0,
            first: None,
            second: None,
        })
    }

    /// Drops accumulated moments and the step counter.
    pub fn reset(&mut self) {
        self.t = 0;
        self.first = None;
        self.second = None;
    }

    /// Applies one update and advances the step counter.
    pub fn step(&mut self, state: &mut ModelState, grads: &Gradients) -> Result<()> {
        let t = self.t + 1;
        self.step_at(state, grads, t)?;
        self.t = t;
        Ok(())
    }

    /// Applies one update treating it as step `t` (1-based) for Adam bias correction.
    pub fn step_at(&mut self, state: &mut ModelState, grads: &Gradients, t: u64) -> Result<()> {
        if state.num_params() != grads.num_params() {
            return Err(Error::Shape {
                expected: vec![state.num_params()],
                actual: vec![grads.num_params()],
            });
        }
        let c = self.config;
        match c.kind {
            OptimizerKind::Sgd => {
                if c.momentum == 0.0 {
                    for (w, &g) in state.iter_mut().zip(grads.iter()) {
                        *w -= c.learning_rate * (g + c.weight_decay * *w);
                    }
                } else {
                    let v = self.first.get_or_insert_with(|| zeros_like(grads));
                    for ((w, &g), v) in state.iter_mut().zip(grads.iter()).zip(v.iter_mut()) {
                        *v = c.momentum * *v + g + c.weight_decay * *w;
                        *w -= c.learning_rate * *v;
                    }
                }
            }
            OptimizerKind::Adam => {
                if t == 0 {
                    return config_err("adam step index must be >= 1");
                }
                let m = self.first.get_or_insert_with(|| zeros_like(grads));
                let v = self.second.get_or_insert_with(|| zeros_like(grads));
                let bc1 = 1.0 - c.beta1.powf(t as f64);
                let bc2 = 1.0 - c.beta2.powf(t as f64);
                for (((w, &g), m), v) in state
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    let g = g + c.weight_decay * *w;
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
                }
            }
        }
        Ok(())
    }
}

fn zeros_like(s: &ModelState) -> ModelState {
    let mut z = s.clone();
    z.iter_mut().for_each(|v| *v = 0.0);
    z
}
