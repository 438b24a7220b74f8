//! Rotary position embeddings.
//!
//! Frequencies `θ_i = base^(−2i/head_dim)`; position `m` rotates each
//! `(x_{2i}, x_{2i+1})` pair by angle `m·θ_i`. Rotations are orthogonal, so
//! the per-pair L2 norm is preserved exactly, and the inner product of a
//! rotated query/key pair depends only on the relative position.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Precomputed `cos`/`sin` tables of shape `[max_seq_len × head_dim/2]`.
#[derive(Debug, Clone)]
pub struct RopeCache {
    pub cos: Tensor,
    pub sin: Tensor,
    pub base: f64,
    pub head_dim: usize,
}

impl RopeCache {
    pub fn max_len(&self) -> usize {
        self.cos.rows()
    }
}

pub fn rope_build_cache(max_len: usize, head_dim: usize, base: f64) -> Result<RopeCache> {
    if head_dim < 2 || !head_dim.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "rope: head_dim must be even and >= 2, got {head_dim}"
        )));
    }
    let half = head_dim / 2;
    let mut cos = Tensor::zeros(&[max_len, half]);
    let mut sin = Tensor::zeros(&[max_len, half]);
    for i in 0..half {
        let theta = base.powf(-2.0 * i as f64 / head_dim as f64);
        for m in 0..max_len {
            let angle = m as f64 * theta;
            cos.set(m, i, angle.cos());
            sin.set(m, i, angle.sin());
        }
    }
    Ok(RopeCache {
        cos,
        sin,
        base,
        head_dim,
    })
}

fn rotate_rows(x: &mut Tensor, positions: &[usize], cache: &RopeCache, invert: bool) {
    let hd = cache.head_dim;
    let half = hd / 2;
    let width = x.cols();
    debug_assert_eq!(width % hd, 0);
    let heads = width / hd;
    for (r, &pos) in positions.iter().enumerate() {
        let row = x.row_mut(r);
        for h in 0..heads {
            let off = h * hd;
            for i in 0..half {
                let c = cache.cos.at(pos, i);
                let s = if invert {
                    -cache.sin.at(pos, i)
                } else {
                    cache.sin.at(pos, i)
                };
                let x0 = row[off + 2 * i];
                let x1 = row[off + 2 * i + 1];
                row[off + 2 * i] = x0 * c - x1 * s;
                row[off + 2 * i + 1] = x1 * c + x0 * s;
            }
        }
    }
}

fn check_args(x: &Tensor, positions: &[usize], cache: &RopeCache) -> Result<()> {
    if !x.cols().is_multiple_of(cache.head_dim) {
        return Err(Error::ShapeMismatch(format!(
            "rope: row width {} not a multiple of head_dim {}",
            x.cols(),
            cache.head_dim
        )));
    }
    if positions.len() != x.rows() {
        return Err(Error::ShapeMismatch(format!(
            "rope: {} positions for {} rows",
            positions.len(),
            x.rows()
        )));
    }
    if let Some(&p) = positions.iter().max() {
        if p >= cache.max_len() {
            return Err(Error::InvalidArgument(format!(
                "rope: position {p} outside cache range {}",
                cache.max_len()
            )));
        }
    }
    Ok(())
}

/// Rotate queries and keys in one call with shared cos/sin lookups.
///
/// `q` and `k` are `[rows × H·head_dim]` (any head count, including 1);
/// `positions[r]` is the sequence position of row `r`.
pub fn rope_apply_qk(
    q: &Tensor,
    k: &Tensor,
    positions: &[usize],
    cache: &RopeCache,
) -> Result<(Tensor, Tensor)> {
    check_args(q, positions, cache)?;
    check_args(k, positions, cache)?;
    let mut q = q.clone();
    let mut k = k.clone();
    rotate_rows(&mut q, positions, cache, false);
    rotate_rows(&mut k, positions, cache, false);
    Ok((q, k))
}

/// Inverse rotation (transpose of the rotation matrix); this is the rotation
/// the backward pass applies to upstream gradients.
pub fn rope_apply_inverse(x: &Tensor, positions: &[usize], cache: &RopeCache) -> Result<Tensor> {
    check_args(x, positions, cache)?;
    let mut x = x.clone();
    rotate_rows(&mut x, positions, cache, true);
    Ok(x)
}
