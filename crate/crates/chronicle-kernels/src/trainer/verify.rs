//! Training-correctness verification: one forward/backward, then three
//! checks that catch the classic silent failures — zero gradient norm
//! (nothing is training), unexpected trainable fraction (weights frozen or
//! accidentally thawed), and non-finite loss.

use super::{backward, forward_loss, Batch, Gradients, Model};
use crate::error::Result;
use serde::{Deserialize, Serialize};

pub const CHECK_GRAD_NORM: &str = "gradient norm is zero";
pub const CHECK_TRAINABLE: &str = "trainable fraction";
pub const CHECK_FINITE_LOSS: &str = "non-finite loss";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub loss: f64,
    pub grad_norm: f64,
    pub trainable_fraction: f64,
    pub expected_trainable_fraction: f64,
    pub failures: Vec<String>,
    pub pass: bool,
}

pub fn verify(model: &Model, batch: &Batch) -> Result<VerificationReport> {
    let (loss, caches) = forward_loss(model, batch)?;
    let grads = backward(model, batch, &caches)?;
    Ok(report_from(model, loss, &grads))
}

/// Check an already-computed step; `verify` is this plus one fwd/bwd.
pub fn report_from(model: &Model, loss: f64, grads: &Gradients) -> VerificationReport {
    let grad_norm = grads.global_norm(model);
    let trainable_fraction = model.trainable_fraction();
    let expected = model.expected_trainable_fraction;
    let mut failures = Vec::new();
    // NaN grad norms (overflow upstream) must also fail this check.
    if grad_norm.is_nan() || grad_norm <= 0.0 {
        failures.push(CHECK_GRAD_NORM.to_string());
    }
    if (trainable_fraction - expected).abs() > 1e-12 {
        failures.push(CHECK_TRAINABLE.to_string());
    }
    if !loss.is_finite() {
        failures.push(CHECK_FINITE_LOSS.to_string());
    }
    VerificationReport {
        loss,
        grad_norm,
        trainable_fraction,
        expected_trainable_fraction: expected,
        pass: failures.is_empty(),
        failures,
    }
}
