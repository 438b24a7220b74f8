//! AdamW with decoupled weight decay, written as one logical pass in the
//! exact order a fused kernel performs it:
//!
//! 1. `g ← g · clip_coef`
//! 2. `θ ← θ · (1 − lr·wd)`      (decay before the adaptive update)
//! 3. `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`
//! 4. step counter increments, then `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`
//! 5. `θ ← θ − lr·m̂/(√v̂ + ε)`
//!
//! The counter is a plain integer owned by the state; bias corrections are
//! computed from it after the increment, so step 1 uses `1 − β¹`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamWHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamWState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
    pub hyper: AdamWHyper,
}

impl AdamWState {
    pub fn new(shape: &[usize], hyper: AdamWHyper) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
            hyper,
        }
    }
}

/// One fused-order step. `clip_coef` comes from [`super::clip_coefficient`];
/// `lr_factor` carries the schedule (warmup) multiplier.
pub fn adamw_step(
    params: &mut Tensor,
    grads: &Tensor,
    state: &mut AdamWState,
    clip_coef: f64,
    lr_factor: f64,
) -> Result<()> {
    params.require_same_shape(grads, "adamw_step params/grads")?;
    params.require_same_shape(&state.m, "adamw_step params/state")?;
    if !grads.all_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let h = state.hyper;
    let lr = h.lr * lr_factor;
    state.step += 1;
    let t = state.step as i32;
    let bias_correction1 = 1.0 - h.beta1.powi(t);
    let bias_correction2 = 1.0 - h.beta2.powi(t);

    let n = params.len();
    let p = params.data_mut();
    let g = grads.data();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for i in 0..n {
        let gi = g[i] * clip_coef;
        p[i] *= 1.0 - lr * h.weight_decay;
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
        let m_hat = m[i] / bias_correction1;
        let v_hat = v[i] / bias_correction2;
        p[i] -= lr * (m_hat / (v_hat.sqrt() + h.eps));
    }
    Ok(())
}
