use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn matches(&self, store: &ParamStore) -> bool {
        self.m.len() == store.tensors().len()
            && self.v.len() == store.tensors().len()
            && store
                .tensors()
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(t, (m, v))| m.len() == t.len() && v.len() == t.len())
    }

    /// Applies one bias-corrected Adam step using the gradients stored in
    /// `store`. Fails without touching anything if a gradient is non-finite.
    pub fn update(&mut self, store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
        if !(cfg.lr > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                cfg.lr
            )));
        }
        if !self.matches(store) {
            return Err(Error::Dimension(
                "optimizer state does not match parameter layout".into(),
            ));
        }
        for t in store.tensors() {
            if let Some(i) = t.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {}[{i}] is {}",
                    t.name, t.grad[i]
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for ((t, m), v) in store.tensors_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..t.values.len() {
                let g = t.grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                t.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
