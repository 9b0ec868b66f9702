//! Adam with bias correction.
//!
//! For each parameter `p` with gradient `g`, at step `t` (1-based):
//!
//! ```text
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! p ← p − lr · (m / (1−β1^t)) / (sqrt(v / (1−β2^t)) + ε)
//! ```
//!
//! Gradients are zeroed after every step.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{GdnnError, Result};
use crate::nn::{Matrix, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    t: u64,
    moments: IndexMap<String, (Matrix<T>, Matrix<T>)>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments shaped after `params`.
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let moments = params
            .iter()
            .map(|(name, v)| {
                (
                    name.to_string(),
                    (Matrix::zeros(v.rows(), v.cols()), Matrix::zeros(v.rows(), v.cols())),
                )
            })
            .collect();
        Self {
            config,
            t: 0,
            moments,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        if params.len() != self.moments.len() {
            return Err(GdnnError::shape(
                "adam_step",
                format!("{} parameters, {} moment slots", params.len(), self.moments.len()),
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        let lr = T::lit(self.config.lr);
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let eps = T::lit(self.config.eps);
        let one = T::one();
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);

        for (name, value, grad) in params.iter_mut() {
            let (m, v) = self
                .moments
                .get_mut(name)
                .ok_or_else(|| GdnnError::UnknownParam(name.to_string()))?;
            if m.shape() != value.shape() || grad.shape() != value.shape() {
                return Err(GdnnError::shape(
                    "adam_step",
                    format!("`{name}` is {:?}, moments {:?}", value.shape(), m.shape()),
                ));
            }
            for (((p, g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            if !value.is_finite() {
                return Err(GdnnError::NonFinite(format!("adam update of `{name}`")));
            }
            grad.fill(T::zero());
        }
        Ok(())
    }
}
