//! Low-rank adapters.
//!
//! LoRA keeps the base weight `W₀ [d×k]` frozen and learns
//! `ΔW = (α/r)·B·A` with `B [d×r]` starting at exactly zero and
//! `A [r×k] ~ N(0, 1/r)`. At that initialization the adapted layer equals
//! the base layer and `∂L/∂A = Bᵀ·E = 0`: only `B` moves on the first step.
//!
//! DoRA adds a learnable per-output magnitude `m` over the column-normalized
//! direction of `W₀ + ΔW`, so magnitude and direction train independently.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct LoraAdapter {
    /// Down-projection `[r × k]`, small Gaussian at init.
    pub a: Tensor,
    /// Up-projection `[d × r]`, exactly zero at init.
    pub b: Tensor,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    /// `A ~ N(0, 1/r)`, `B = 0`.
    pub fn init<R: Rng>(
        d_out: usize,
        d_in: usize,
        rank: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if rank == 0 || rank > d_out.min(d_in) {
            return Err(Error::InvalidArgument(format!(
                "lora: rank {rank} must be in [1, min({d_out}, {d_in})]"
            )));
        }
        let sigma = 1.0 / (rank as f64).sqrt();
        Ok(Self {
            a: Tensor::randn(&[rank, d_in], sigma, rng),
            b: Tensor::zeros(&[d_out, rank]),
            rank,
            alpha,
        })
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// The dense update `ΔW = scaling·B·A`, shape `[d × k]`.
    pub fn delta_w(&self) -> Result<Tensor> {
        let mut dw = self.b.matmul(&self.a)?;
        dw.scale(self.scaling());
        Ok(dw)
    }
}

fn check_lora_shapes(x: &Tensor, w0: &Tensor, adapter: &LoraAdapter) -> Result<()> {
    let k = x.cols();
    if w0.cols() != k {
        return Err(Error::ShapeMismatch(format!(
            "lora: x width {k} vs W0 width {}",
            w0.cols()
        )));
    }
    if adapter.a.cols() != k
        || adapter.b.rows() != w0.rows()
        || adapter.a.rows() != adapter.rank
        || adapter.b.cols() != adapter.rank
    {
        return Err(Error::ShapeMismatch(format!(
            "lora: adapter A{:?}/B{:?} vs W0 {:?}",
            adapter.a.shape(),
            adapter.b.shape(),
            w0.shape()
        )));
    }
    Ok(())
}

/// Unfused forward: `y = x·W₀ᵀ + scaling·(x·Aᵀ)·Bᵀ`.
pub fn lora_fwd(x: &Tensor, w0: &Tensor, adapter: &LoraAdapter) -> Result<Tensor> {
    check_lora_shapes(x, w0, adapter)?;
    let mut y = x.matmul_transb(w0)?;
    let xa = x.matmul_transb(&adapter.a)?;
    let mut lora = xa.matmul_transb(&adapter.b)?;
    lora.scale(adapter.scaling());
    y.add_assign(&lora);
    Ok(y)
}

/// Fused identity path: one GEMM over the stacked operands,
/// `y = [x | scaling·(x·Aᵀ)] · [W₀ | B]ᵀ`. Agrees with [`lora_fwd`] to
/// rounding error; exists so the identity itself stays under test.
pub fn lora_fwd_fused(x: &Tensor, w0: &Tensor, adapter: &LoraAdapter) -> Result<Tensor> {
    check_lora_shapes(x, w0, adapter)?;
    let mut xa = x.matmul_transb(&adapter.a)?;
    xa.scale(adapter.scaling());
    let x_aug = x.hcat(&xa)?;
    let w_aug = w0.hcat(&adapter.b)?;
    x_aug.matmul_transb(&w_aug)
}

/// Backward pass. With `E = dyᵀ·x` (the gradient of the dense weight):
///
/// ```text
/// dx = dy·(W₀ + scaling·B·A)
/// dB = scaling·E·Aᵀ
/// dA = scaling·Bᵀ·E
/// ```
///
/// `dA` is exactly zero while `B = 0`.
pub fn lora_bwd(
    dy: &Tensor,
    x: &Tensor,
    w0: &Tensor,
    adapter: &LoraAdapter,
) -> Result<(Tensor, Tensor, Tensor)> {
    check_lora_shapes(x, w0, adapter)?;
    if dy.rows() != x.rows() || dy.cols() != w0.rows() {
        return Err(Error::ShapeMismatch(format!(
            "lora_bwd: dy {:?} vs rows {} x d_out {}",
            dy.shape(),
            x.rows(),
            w0.rows()
        )));
    }
    let s = adapter.scaling();
    // dx through both branches.
    let mut dx = dy.matmul(w0)?;
    let dyb = dy.matmul(&adapter.b)?; // [rows × r]
    let mut dx_lora = dyb.matmul(&adapter.a)?;
    dx_lora.scale(s);
    dx.add_assign(&dx_lora);
    // E = dyᵀ·x, formed implicitly through the low-rank factors.
    let xa = x.matmul_transb(&adapter.a)?; // [rows × r]
    let mut db = dy.matmul_transa(&xa)?; // dyᵀ·(xAᵀ) = E·Aᵀ
    db.scale(s);
    let mut da = dyb.matmul_transa(x)?; // (dy·B)ᵀ·x = Bᵀ·E
    da.scale(s);
    Ok((dx, da, db))
}

/// DoRA: LoRA plus a learnable magnitude per output column.
#[derive(Debug, Clone)]
pub struct DoraAdapter {
    pub lora: LoraAdapter,
    /// Per-output magnitude, length `d`. Initialized to the column norms of
    /// `W₀` so the adapted layer starts exactly at the base layer.
    pub magnitude: Tensor,
}

impl DoraAdapter {
    pub fn init<R: Rng>(w0: &Tensor, rank: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        let lora = LoraAdapter::init(w0.rows(), w0.cols(), rank, alpha, rng)?;
        let magnitude = Tensor::new(vec![w0.rows()], column_norms(w0))?;
        Ok(Self { lora, magnitude })
    }
}

/// L2 norm of each output's weight vector (row of the `[d×k]` layout, i.e.
/// column of the `x ↦ x·Wᵀ` map). No epsilon: a zero norm is an error at
/// the call site.
pub fn column_norms(w: &Tensor) -> Vec<f64> {
    (0..w.rows())
        .map(|i| w.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Effective DoRA weight `W' = m ⊙ (W₀ + ΔW) / ‖W₀ + ΔW‖_col`.
pub fn dora_weight(w0: &Tensor, adapter: &DoraAdapter) -> Result<Tensor> {
    let mut combined = w0.clone();
    combined.add_assign(&adapter.lora.delta_w()?);
    let norms = column_norms(&combined);
    if norms.contains(&0.0) {
        return Err(Error::InvalidArgument(
            "dora: zero column norm in W0 + BA".into(),
        ));
    }
    let mut w = combined;
    for i in 0..w.rows() {
        let scale = adapter.magnitude.data()[i] / norms[i];
        for v in w.row_mut(i) {
            *v *= scale;
        }
    }
    Ok(w)
}

/// Forward pass `y = x·W'ᵀ`.
pub fn dora_fwd(x: &Tensor, w0: &Tensor, adapter: &DoraAdapter) -> Result<Tensor> {
    check_lora_shapes(x, w0, &adapter.lora)?;
    let w = dora_weight(w0, adapter)?;
    x.matmul_transb(&w)
}

/// Backward pass: chain rule through the magnitude/direction decomposition.
/// Returns `(dx, dA, dB, dm)`.
///
/// Per output column `j` with `c_j` the row of `W₀ + ΔW`, `n_j = ‖c_j‖`,
/// and upstream weight gradient `G = dyᵀ·x`:
///
/// ```text
/// dm_j = ĉ_j · G_j
/// dC_j = (m_j/n_j) · (G_j − (ĉ_j·G_j)·ĉ_j)     (project out the radial part)
/// dA   = scaling·Bᵀ·dC,  dB = scaling·dC·Aᵀ
/// ```
pub fn dora_bwd(
    dy: &Tensor,
    x: &Tensor,
    w0: &Tensor,
    adapter: &DoraAdapter,
) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
    check_lora_shapes(x, w0, &adapter.lora)?;
    let s = adapter.lora.scaling();
    let mut combined = w0.clone();
    combined.add_assign(&adapter.lora.delta_w()?);
    let norms = column_norms(&combined);
    if norms.contains(&0.0) {
        return Err(Error::InvalidArgument(
            "dora: zero column norm in W0 + BA".into(),
        ));
    }

    let w_eff = {
        let mut w = combined.clone();
        for i in 0..w.rows() {
            let scale = adapter.magnitude.data()[i] / norms[i];
            for v in w.row_mut(i) {
                *v *= scale;
            }
        }
        w
    };
    let dx = dy.matmul(&w_eff)?;

    let g = dy.matmul_transa(x)?; // dL/dW' [d×k]
    let d_out = w0.rows();
    let mut dm = Tensor::zeros(&[d_out]);
    let mut dc = Tensor::zeros(combined.shape());
    for j in 0..d_out {
        let cj = combined.row(j);
        let gj = g.row(j);
        let n = norms[j];
        let radial: f64 = cj.iter().zip(gj.iter()).map(|(c, gg)| c * gg).sum::<f64>() / n;
        dm.data_mut()[j] = radial;
        let mj = adapter.magnitude.data()[j];
        let dcj = dc.row_mut(j);
        for i in 0..cj.len() {
            let chat = cj[i] / n;
            dcj[i] = (mj / n) * (gj[i] - radial * chat);
        }
    }
    let mut da = adapter.lora.b.matmul_transa(&dc)?;
    da.scale(s);
    let mut db = dc.matmul_transb(&adapter.lora.a)?;
    db.scale(s);
    Ok((dx, da, db, dm))
}
