//! Adam with bias correction and a multiplicative per-step learning-rate decay.

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    /// Applied after every step; 1.0 keeps the rate constant.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, decay: f64) -> Self {
        Self {
            lr,
            decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            lr: config.lr,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Learning rate the next step will use: `base * decay^steps`.
    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.slices();
        if !grads.iter().all(|s| s.iter().all(|g| g.is_finite())) {
            return Err(Error::NonFinite("gradient".into()));
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|s| vec![0.0; s.len()]).collect();
            self.second = self.first.clone();
        }
        let mut params = params.slices_mut();
        let layout_ok = params.len() == grads.len()
            && self.first.len() == grads.len()
            && params
                .iter()
                .zip(&grads)
                .zip(&self.first)
                .all(|((p, g), m)| p.len() == g.len() && m.len() == g.len());
        if !layout_ok {
            return Err(Error::shape("parameter and gradient layouts differ"));
        }

        self.step += 1;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let lr = self.lr;

        for (k, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        self.lr *= self.config.decay;
        Ok(())
    }
}
