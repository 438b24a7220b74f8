//! Adam-atan2: replaces `m̂/(√v̂ + ε)` with `atan2(m̂, √v̂)`, which is the
//! same ratio for well-conditioned moments but saturates at ±π/2 instead of
//! exploding when `v̂ → 0`. No epsilon needed.

use crate::error::{Error, Result};
use crate::optim::adamw::{AdamWHyper, AdamWState};
use crate::tensor::Tensor;

/// Primitive update `θ ← θ − η·atan2(m̂, √v̂)` on bias-corrected moments.
pub fn adam_atan2_step(theta: &mut Tensor, m_hat: &Tensor, v_hat: &Tensor, eta: f64) -> Result<()> {
    theta.require_same_shape(m_hat, "adam_atan2 theta/m")?;
    theta.require_same_shape(v_hat, "adam_atan2 theta/v")?;
    if v_hat.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "adam_atan2: v_hat must be >= 0".into(),
        ));
    }
    for i in 0..theta.len() {
        let update = m_hat.data()[i].atan2(v_hat.data()[i].sqrt());
        theta.data_mut()[i] -= eta * update;
    }
    Ok(())
}

/// Stateful variant for the trainer: same moment bookkeeping and decoupled
/// decay as AdamW, atan2 in the final update.
#[derive(Debug, Clone)]
pub struct AdamAtan2State {
    pub inner: AdamWState,
}

impl AdamAtan2State {
    pub fn new(shape: &[usize], hyper: AdamWHyper) -> Self {
        Self {
            inner: AdamWState::new(shape, hyper),
        }
    }

    pub fn step(
        &mut self,
        params: &mut Tensor,
        grads: &Tensor,
        clip_coef: f64,
        lr_factor: f64,
    ) -> Result<()> {
        params.require_same_shape(grads, "adam_atan2 params/grads")?;
        if !grads.all_finite() {
            return Err(Error::NonFiniteGradient);
        }
        let h = self.inner.hyper;
        let lr = h.lr * lr_factor;
        self.inner.step += 1;
        let t = self.inner.step as i32;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads.data()[i] * clip_coef;
            let p = &mut params.data_mut()[i];
            *p *= 1.0 - lr * h.weight_decay;
            let m = &mut self.inner.m.data_mut()[i];
            *m = h.beta1 * *m + (1.0 - h.beta1) * g;
            let v = &mut self.inner.v.data_mut()[i];
            *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
            let update = (*m / bc1).atan2((*v / bc2).sqrt());
            *p -= lr * update;
        }
        Ok(())
    }
}
