//! Adam and plain SGD.

use super::params::Params;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

/// Optimiser with per-parameter moment accumulators (unused by SGD).
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &Params) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().map(|s| vec![0.0; s.len()]).collect();
        Self { kind, m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Adam uses the bias-corrected moments:
    /// `w -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        if !params.same_layout(grads) || params.slices().count() != self.m.len() {
            return Err(CoreError::domain("gradient layout does not match the parameters"));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (w, g) in params.slices_mut().zip(grads.slices()) {
                    for (wi, gi) in w.iter_mut().zip(g) {
                        *wi -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((w, g), m), v) in params.slices_mut().zip(grads.slices()).zip(&mut self.m).zip(&mut self.v) {
                    for i in 0..w.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        params.bump_version();
        Ok(())
    }
}
