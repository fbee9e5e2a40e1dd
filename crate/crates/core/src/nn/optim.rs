//! Adam optimizer with bias correction.

use super::tensor::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        assert!(cfg.lr > 0.0, "learning rate must be positive");
        Adam {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every parameter in the store, consuming the
    /// accumulated gradients (which are left untouched; call `zero_grad`
    /// before the next accumulation).
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        store.check_grads_finite()?;
        if self.m.is_empty() {
            for p in store.iter() {
                self.m.push(vec![0.0; p.value.numel()]);
                self.v.push(vec![0.0; p.value.numel()]);
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);
        for (i, p) in store.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((val, &g), (mi, vi)) in p
                .value
                .data
                .iter_mut()
                .zip(&p.grad.data)
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * g;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *val -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }

    /// Moment state in parameter declaration order, for checkpoint resume.
    pub fn state(&self) -> (&[Vec<f64>], &[Vec<f64>], u64) {
        (&self.m, &self.v, self.step)
    }

    pub fn restore(cfg: AdamConfig, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, step: u64) -> Self {
        Adam { cfg, m, v, step }
    }
}
