//! Optimizer steps with fused-kernel semantics.
//!
//! The global clip coefficient is computed once per step over all gradients
//! and then passed into every tensor's step, so the per-tensor updates never
//! need a cross-tensor synchronization point.

mod adamw;
mod atan2;
mod groups;
mod muon;
mod quantized;
mod schedule_free;

pub use adamw::{adamw_step, AdamWHyper, AdamWState};
pub use atan2::{adam_atan2_step, AdamAtan2State};
pub use groups::{build_lora_plus_groups, resolve_hyper, GroupLabel, ParamGroup};
pub use muon::{muon_step, newton_schulz, newton_schulz_literal, MUON_DEFAULT_STEPS};
pub use quantized::{
    dequantize_state, quantize_state, QuantizedAdamWState, QuantizedState, DEFAULT_STATE_BLOCK,
};
pub use schedule_free::{schedulefree_step, ScheduleFreeState};

use crate::tensor::Tensor;

/// `min(1, max_norm / (‖g‖₂ + 1e-6))` over the concatenation of all
/// gradients. Nothing is mutated here; callers multiply by the coefficient
/// inside their step.
pub fn clip_coefficient<'a>(grads: impl IntoIterator<Item = &'a Tensor>, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads {
        for &v in g.data() {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    (max_norm / (norm + 1e-6)).min(1.0)
}
