use serde::{Deserialize, Serialize};

use super::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Weight decay, if any, is added to the gradient (L2 penalty).
    Adam,
    /// Decoupled weight decay `w <- w (1 - lr * wd)` applied before the Adam delta.
    AdamW,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub variant: Variant,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn adam(lr: f64) -> Self {
        AdamConfig {
            variant: Variant::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw(lr: f64) -> Self {
        AdamConfig {
            variant: Variant::AdamW,
            weight_decay: 0.01,
            ..AdamConfig::adam(lr)
        }
    }
}

/// Per-parameter moment estimates.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub hyper: AdamConfig,
}

impl OptimizerState {
    pub fn new(store: &ParamStore, hyper: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        OptimizerState {
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            hyper,
        }
    }

    /// One bias-corrected Adam(W) update from the accumulated gradients.
    /// Frozen parameters are skipped. Gradients are left untouched.
    pub fn step(&mut self, store: &mut ParamStore) {
        let h = self.hyper;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);
        for ((p, m), v) in store
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            if !p.requires_grad {
                continue;
            }
            let decay = if h.variant == Variant::AdamW {
                1.0 - h.lr * h.weight_decay
            } else {
                1.0
            };
            let grads = p.grad.data().to_vec();
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let mut g = grads[i];
                if h.variant == Variant::Adam && h.weight_decay != 0.0 {
                    g += h.weight_decay * *w;
                }
                m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
                v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w = *w * decay - h.lr * m_hat / (v_hat.sqrt() + h.eps);
            }
        }
    }
}
