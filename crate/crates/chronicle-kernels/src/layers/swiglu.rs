//! SwiGLU gating: `out = SiLU(gate) ⊙ up` with `SiLU(x) = x·σ(x)`.
//! The projections producing `gate`/`up` live in the trainer.

use crate::error::Result;
use crate::tensor::Tensor;
use crate::testing::{fault_active, Fault};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn swiglu_fwd(gate: &Tensor, up: &Tensor) -> Result<Tensor> {
    gate.require_same_shape(up, "swiglu_fwd")?;
    gate.zip_map(up, |g, u| g * sigmoid(g) * u)
}

/// Backward pass. Returns `(dgate, dup)` where
///
/// ```text
/// dSiLU(g) = σ(g)·(1 + g·(1 − σ(g)))
/// dgate    = dout · up · dSiLU(g)
/// dup      = dout · g · σ(g)
/// ```
pub fn swiglu_bwd(dout: &Tensor, gate: &Tensor, up: &Tensor) -> Result<(Tensor, Tensor)> {
    dout.require_same_shape(gate, "swiglu_bwd dout/gate")?;
    gate.require_same_shape(up, "swiglu_bwd gate/up")?;
    let sign = if fault_active(Fault::SwigluBwdSignFlip) {
        -1.0
    } else {
        1.0
    };
    let mut dgate = Tensor::zeros(gate.shape());
    let mut dup = Tensor::zeros(up.shape());
    for i in 0..gate.len() {
        let g = gate.data()[i];
        let u = up.data()[i];
        let d = dout.data()[i];
        let s = sigmoid(g);
        dgate.data_mut()[i] = sign * d * u * s * (1.0 + g * (1.0 - s));
        dup.data_mut()[i] = d * g * s;
    }
    Ok((dgate, dup))
}
