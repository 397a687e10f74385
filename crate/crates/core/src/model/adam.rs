use serde::{Deserialize, Serialize};

use super::{Gradients, MaskNet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite())
            || !unit(self.beta1)
            || !unit(self.beta2)
            || !(self.eps > 0.0 && self.eps.is_finite())
        {
            return Err(Error::invalid(format!("bad Adam settings: {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(net: &MaskNet) -> Self {
        let zeros: Vec<Vec<f64>> = Gradients::zeros_like(net)
            .slices()
            .into_iter()
            .map(|s| vec![0.0; s.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update:
/// `p -= lr · m̂ / (sqrt(v̂) + eps)`.
pub fn adam_step(net: &mut MaskNet, grads: &Gradients, state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    config.validate()?;
    let grad_slices = grads.slices();
    let mut params = net.parameter_slices_mut();
    if grad_slices.len() != params.len()
        || grad_slices.iter().zip(&params).any(|(g, p)| g.len() != p.len())
        || state.m.len() != params.len()
    {
        return Err(Error::invalid("gradient/optimizer layout does not match the network"));
    }
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - config.beta1.powi(t);
    let correction2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(&grad_slices)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
