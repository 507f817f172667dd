use serde::{Deserialize, Serialize};

use super::Mpn;
use crate::error::{AmberError, Result};

/// Bias-corrected Adam with per-parameter moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Scalar Adam settings as stored in checkpoint headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) struct AdamHeader {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

pub const DEFAULT_LR: f64 = 3e-4;

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn for_model(mpn: &Mpn, lr: f64) -> Self {
        Self::new(mpn.n_params(), lr)
    }

    pub(crate) fn header(&self) -> AdamHeader {
        AdamHeader { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, step: self.step }
    }

    pub(crate) fn from_header(h: AdamHeader, m: Vec<f64>, v: Vec<f64>) -> Self {
        AdamState { lr: h.lr, beta1: h.beta1, beta2: h.beta2, eps: h.eps, step: h.step, m, v }
    }

    pub fn apply(&mut self, mpn: &mut Mpn, grad: &[f64]) -> Result<()> {
        if grad.len() != self.m.len() || grad.len() != mpn.n_params() {
            return Err(AmberError::Shape(format!(
                "{} gradients for {} parameters",
                grad.len(),
                mpn.n_params()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let params = mpn.params_mut();
        for i in 0..grad.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}
