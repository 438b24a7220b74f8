//! Seeded dropout with a counter-based generator.
//!
//! The keep mask is a pure function of `(seed, offset + element index)`, so
//! the backward pass regenerates it bit-identically instead of storing it.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// SplitMix64 finalizer: a stateless counter-based generator. One hash per
/// element, keyed by seed and global element index.
#[inline]
fn mix(seed: u64, counter: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(counter)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn uniform01(seed: u64, counter: u64) -> f64 {
    // 53 high bits -> [0, 1)
    (mix(seed, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn keep(seed: u64, counter: u64, p: f64) -> bool {
    uniform01(seed, counter) >= p
}

/// Forward dropout: kept entries scaled by `1/(1−p)`, dropped entries zero.
/// `offset` is the global index of the tensor's first element, letting one
/// seed cover many tensors without mask reuse.
pub fn dropout_fwd(x: &Tensor, p: f64, seed: u64, offset: u64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout: p must be in [0, 1), got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(x.clone());
    }
    let scale = 1.0 / (1.0 - p);
    let mut y = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        if keep(seed, offset + i as u64, p) {
            y.data_mut()[i] = x.data()[i] * scale;
        }
    }
    Ok(y)
}

/// Backward dropout: regenerates the forward mask from the same key.
pub fn dropout_bwd(dout: &Tensor, p: f64, seed: u64, offset: u64) -> Result<Tensor> {
    dropout_fwd(dout, p, seed, offset)
}
