//! AdamW with decoupled weight decay and a warmup-then-cosine learning rate.

use std::f64::consts::PI;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

struct Slot {
    name: String,
    var: Var,
    decay: bool,
    m: Tensor,
    v: Tensor,
}

pub struct AdamW {
    cfg: AdamWConfig,
    slots: Vec<Slot>,
    step: usize,
}

impl AdamW {
    /// `decay(name)` selects the parameters subject to weight decay.
    pub fn new<'a>(
        vars: impl IntoIterator<Item = (&'a String, &'a Var)>,
        cfg: AdamWConfig,
        decay: impl Fn(&str) -> bool,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) || cfg.eps <= 0.0 || cfg.weight_decay < 0.0 {
            return Err(Error::param(format!("invalid AdamW hyperparameters {cfg:?}")));
        }
        let slots = vars
            .into_iter()
            .map(|(name, var)| {
                Ok(Slot {
                    name: name.clone(),
                    var: var.clone(),
                    decay: decay(name),
                    m: var.as_tensor().zeros_like()?,
                    v: var.as_tensor().zeros_like()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg, slots, step: 0 })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Names of parameters that receive weight decay.
    pub fn decayed(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().filter(|s| s.decay).map(|s| s.name.as_str())
    }

    /// One update at learning rate `lr`. Parameters absent from `grads` are
    /// treated as having zero gradient.
    pub fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for slot in &mut self.slots {
            let theta = slot.var.as_tensor();
            if let Some(g) = grads.get(theta) {
                slot.m = ((&slot.m * c.beta1)? + (g * (1.0 - c.beta1))?)?;
                slot.v = ((&slot.v * c.beta2)? + (g.sqr()? * (1.0 - c.beta2))?)?;
            } else {
                slot.m = (&slot.m * c.beta1)?;
                slot.v = (&slot.v * c.beta2)?;
            }
            let m_hat = (&slot.m / bc1)?;
            let v_hat = (&slot.v / bc2)?;
            let update = (m_hat / (v_hat.sqrt()? + c.eps)?)?;
            let decay = if slot.decay { 1.0 - lr * c.weight_decay } else { 1.0 };
            let next = ((theta * decay)? - (update * lr)?)?;
            slot.var.set(&next)?;
        }
        Ok(())
    }
}

/// Linear warmup to `base_lr` over `warmup` steps, then cosine decay to zero
/// at `total` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupCosine {
    pub base_lr: f64,
    pub warmup: usize,
    pub total: usize,
}

impl WarmupCosine {
    /// Learning rate for the update numbered `step` (starting at 0).
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.base_lr * (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.total.saturating_sub(self.warmup).max(1);
        let progress = ((step - self.warmup) as f64 / span as f64).min(1.0);
        0.5 * self.base_lr * (1.0 + (PI * progress).cos())
    }
}
