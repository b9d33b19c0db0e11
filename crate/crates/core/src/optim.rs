//! First-order optimizers.
//!
//! Adam follows the variant with two stability constants: one inside the
//! square root and one outside,
//!
//! ```text
//! u_t = alpha * m_hat / (sqrt(v_hat + eps_bar) + eps)
//! ```
//!
//! With `eps_bar = 0` and a tiny `eps` this is the common default and its
//! per-coordinate step can blow up to `alpha * m_hat / eps` when the second
//! moment collapses; a nonzero `eps_bar` bounds the step even when both
//! moments are near zero. The two presets below pin the exact constants
//! compared throughout the experiments.

use serde::{Deserialize, Serialize};

use crate::error::{PlabError, Result};
use crate::nn::ParamVector;
use crate::rng::{stream_rng, stream};

/// Optimizer choice plus hyperparameters, as written in run configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimSpec {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        /// Constant added outside the square root.
        eps: f64,
        /// Constant added inside the square root.
        eps_bar: f64,
    },
}

impl OptimSpec {
    /// Common Adam constants: `beta2 = 0.999`, tiny outside epsilon.
    pub fn adam_default(lr: f64) -> Self {
        OptimSpec::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-9,
            eps_bar: 0.0,
        }
    }

    /// Stabilized constants: faster second moment and an inside epsilon
    /// that bounds the update when gradients vanish.
    pub fn adam_tuned(lr: f64) -> Self {
        OptimSpec::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.9,
            eps: 1e-9,
            eps_bar: 1e-3,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimSpec::Sgd { lr } => lr,
            OptimSpec::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimSpec::Sgd { lr } => lr > 0.0 && lr.is_finite(),
            OptimSpec::Adam {
                lr,
                beta1,
                beta2,
                eps,
                eps_bar,
            } => {
                lr > 0.0
                    && lr.is_finite()
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && eps >= 0.0
                    && eps_bar >= 0.0
                    && eps + eps_bar > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PlabError::Config(format!("invalid optimizer {self:?}")))
        }
    }
}

/// Optimizer with its mutable state (moments, step count).
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub spec: OptimSpec,
    /// Decoupled weight decay coefficient; 0 disables it.
    pub weight_decay: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(spec: OptimSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        let needs_moments = matches!(spec, OptimSpec::Adam { .. });
        Ok(Optimizer {
            spec,
            weight_decay: 0.0,
            t: 0,
            m: if needs_moments { vec![0.0; dim] } else { Vec::new() },
            v: if needs_moments { vec![0.0; dim] } else { Vec::new() },
        })
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    /// Steps taken since construction or the last reset.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Forget moments and step count, as if freshly constructed.
    pub fn reset_state(&mut self) {
        self.t = 0;
        for x in self.m.iter_mut() {
            *x = 0.0;
        }
        for x in self.v.iter_mut() {
            *x = 0.0;
        }
    }

    /// Apply one update in place given the loss gradient.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) {
        assert_eq!(params.len(), grad.len(), "gradient length mismatch");
        self.t += 1;
        match self.spec {
            OptimSpec::Sgd { lr } => {
                for i in 0..params.len() {
                    params[i] -= lr * grad[i];
                }
            }
            OptimSpec::Adam {
                lr,
                beta1,
                beta2,
                eps,
                eps_bar,
            } => {
                debug_assert_eq!(self.m.len(), params.len(), "optimizer built for another net");
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * (g * g);
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / ((v_hat + eps_bar).sqrt() + eps);
                }
            }
        }
        if self.weight_decay > 0.0 {
            // decoupled: shrink after the gradient step, scaled by lr
            let shrink = 1.0 - self.spec.learning_rate() * self.weight_decay;
            for i in 0..params.len() {
                params[i] *= shrink;
            }
        }
    }
}

/// Shrink parameters toward zero and add a fresh-init perturbation:
/// `theta <- lambda * theta + p * phi` with `phi` drawn like an init for
/// `spec` from the intervention stream of `seed` at `index`.
pub fn shrink_and_perturb(
    spec: &crate::nn::NetworkSpec,
    params: &mut ParamVector,
    lambda: f64,
    p: f64,
    seed: u64,
    index: u64,
) -> Result<()> {
    let fresh = crate::nn::build_network_with(spec, &mut stream_rng(seed, stream::INTERVENTION, index))?;
    for i in 0..params.len() {
        params[i] = lambda * params[i] + p * fresh[i];
    }
    Ok(())
}
