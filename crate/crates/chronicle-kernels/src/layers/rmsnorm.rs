//! Root-mean-square normalization: `y = x * rstd * γ` per row with
//! `rstd = 1/sqrt(mean(x²) + ε)`, cached for the backward pass.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-row reciprocal RMS values saved by the forward pass.
#[derive(Debug, Clone)]
pub struct RmsNormCache {
    pub rstd: Vec<f64>,
}

/// Forward pass over `x: [rows × d]` with scale `γ: [d]`.
pub fn rmsnorm_fwd(x: &Tensor, gamma: &Tensor, eps: f64) -> Result<(Tensor, RmsNormCache)> {
    let d = x.cols();
    if gamma.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "rmsnorm: gamma len {} vs row width {d}",
            gamma.len()
        )));
    }
    if eps < 0.0 || (eps == 0.0 && d == 0) {
        return Err(Error::InvalidArgument("rmsnorm: eps must be >= 0".into()));
    }
    let rows = x.rows();
    let g = gamma.data();
    let mut y = Tensor::zeros(x.shape());
    let mut rstd = Vec::with_capacity(rows);
    for i in 0..rows {
        let xr = x.row(i);
        let ms = xr.iter().map(|v| v * v).sum::<f64>() / d as f64;
        let r = 1.0 / (ms + eps).sqrt();
        rstd.push(r);
        let yr = y.row_mut(i);
        for j in 0..d {
            yr[j] = xr[j] * r * g[j];
        }
    }
    Ok((y, RmsNormCache { rstd }))
}

/// Backward pass. Returns `(dx, dγ)`.
///
/// With `x̄ = x·rstd` and `c₁ = (1/d)·Σ_j dy_j γ_j x̄_j` per row:
///
/// ```text
/// dx = rstd · (dy·γ − x̄·c₁)
/// dγ = Σ_rows dy · x̄
/// ```
///
/// The correction term carries no extra γ factor; that is the form central
/// finite differences confirm for non-uniform γ.
pub fn rmsnorm_bwd(
    dy: &Tensor,
    x: &Tensor,
    gamma: &Tensor,
    cache: &RmsNormCache,
) -> Result<(Tensor, Tensor)> {
    dy.require_same_shape(x, "rmsnorm_bwd dy/x")?;
    let d = x.cols();
    let rows = x.rows();
    if cache.rstd.len() != rows {
        return Err(Error::InvalidArgument(
            "rmsnorm_bwd: cache does not match forward".into(),
        ));
    }
    let g = gamma.data();
    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = Tensor::zeros(gamma.shape());
    for i in 0..rows {
        let r = cache.rstd[i];
        let xr = x.row(i);
        let dyr = dy.row(i);
        let mut c1 = 0.0;
        for j in 0..d {
            c1 += dyr[j] * g[j] * xr[j] * r;
        }
        c1 /= d as f64;
        let dxr = dx.row_mut(i);
        for j in 0..d {
            let xbar = xr[j] * r;
            dxr[j] = r * (dyr[j] * g[j] - xbar * c1);
        }
        let dg = dgamma.data_mut();
        for j in 0..d {
            dg[j] += dyr[j] * xr[j] * r;
        }
    }
    Ok((dx, dgamma))
}

/// Residual-fused forward: stores `new_residual = x + residual` and
/// normalizes it. Returns `(y, new_residual, cache)`.
pub fn rmsnorm_residual_fwd(
    x: &Tensor,
    residual: &Tensor,
    gamma: &Tensor,
    eps: f64,
) -> Result<(Tensor, Tensor, RmsNormCache)> {
    x.require_same_shape(residual, "rmsnorm_residual_fwd")?;
    let new_residual = x.zip_map(residual, |a, b| a + b)?;
    let (y, cache) = rmsnorm_fwd(&new_residual, gamma, eps)?;
    Ok((y, new_residual, cache))
}
