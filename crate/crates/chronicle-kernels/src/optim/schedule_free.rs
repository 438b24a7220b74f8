//! Schedule-free step: two parameter versions instead of a learning-rate
//! schedule.
//!
//! ```text
//! z' = β·z + (1−β)·(θ − η·g)
//! θ' = (1−γ_t)·z' + γ_t·θ,   γ_t = βᵗ
//! ```
//!
//! `γ_t` decays geometrically, so early steps lean on the fast iterate and
//! late steps on the average — the implicit decay that replaces a schedule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One step on congruent tensors. Returns `(θ', z')`.
pub fn schedulefree_step(
    theta: &Tensor,
    z: &Tensor,
    grad: &Tensor,
    eta: f64,
    beta: f64,
    t: u64,
) -> Result<(Tensor, Tensor)> {
    theta.require_same_shape(z, "schedulefree theta/z")?;
    theta.require_same_shape(grad, "schedulefree theta/grad")?;
    if t == 0 {
        return Err(Error::InvalidArgument(
            "schedulefree: t must be >= 1".into(),
        ));
    }
    let gamma = beta.powi(t as i32);
    let mut z_new = Tensor::zeros(theta.shape());
    let mut theta_new = Tensor::zeros(theta.shape());
    for i in 0..theta.len() {
        let th = theta.data()[i];
        let zi = z.data()[i];
        let gi = grad.data()[i];
        let z_next = beta * zi + (1.0 - beta) * (th - eta * gi);
        z_new.data_mut()[i] = z_next;
        theta_new.data_mut()[i] = (1.0 - gamma) * z_next + gamma * th;
    }
    Ok((theta_new, z_new))
}

/// Per-tensor state for the trainer: the averaged iterate `z` plus the
/// shared step counter.
#[derive(Debug, Clone)]
pub struct ScheduleFreeState {
    pub z: Tensor,
    pub t: u64,
    pub eta: f64,
    pub beta: f64,
}

impl ScheduleFreeState {
    pub fn new(theta: &Tensor, eta: f64, beta: f64) -> Self {
        Self {
            z: theta.clone(),
            t: 0,
            eta,
            beta,
        }
    }

    pub fn step(
        &mut self,
        theta: &mut Tensor,
        grad: &Tensor,
        clip_coef: f64,
        lr_factor: f64,
    ) -> Result<()> {
        if !grad.all_finite() {
            return Err(Error::NonFiniteGradient);
        }
        self.t += 1;
        let clipped = grad.map(|g| g * clip_coef);
        let (theta_new, z_new) = schedulefree_step(
            theta,
            &self.z,
            &clipped,
            self.eta * lr_factor,
            self.beta,
            self.t,
        )?;
        *theta = theta_new;
        self.z = z_new;
        Ok(())
    }
}
