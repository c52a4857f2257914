//! AdamW with decoupled weight decay and an optional cosine learning-rate decay.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LutError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// `lr_t = base · ½(1 + cos(π t / steps))`, reaching zero at the last step.
    #[default]
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub base_lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    pub total_steps: usize,
}

impl AdamWConfig {
    pub fn learning_rate(&self, t: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.base_lr,
            LrSchedule::Cosine => {
                let progress = t as f64 / self.total_steps as f64;
                self.base_lr * 0.5 * (1.0 + (PI * progress).cos())
            }
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One AdamW update at step `t` (1-based).
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, t: usize, cfg: &AdamWConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(LutError::ShapeMismatch(format!(
            "params {}, grads {}, state {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if t == 0 {
        return Err(LutError::InvalidConfig("optimizer steps are 1-based".into()));
    }
    let (b1, b2) = cfg.betas;
    let lr = cfg.learning_rate(t);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p *= 1.0 - lr * cfg.weight_decay;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}
