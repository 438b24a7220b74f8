//! Cross-entropy two ways: a full-logit reference (`ce_naive`) and the
//! chunked fused-linear form (`cce_fwd`/`cce_bwd`) that streams the
//! vocabulary in chunks of `C` against the LM-head weight and never holds a
//! `[rows × V]` buffer.
//!
//! Per row the loss is `lse − z_target`, optionally blended with the uniform
//! loss for label smoothing and augmented with the `λ_z · lse²` z-loss term.
//! Cross-chunk `lse` accumulation uses the online `(m, d)` state; the naive
//! `log(exp(a) + exp(b))` chaining overflows once `lse` is large.

use crate::error::{Error, Result};
use crate::numerics::{KahanAccumulator, OnlineSoftmaxState};
use crate::tensor::{Precision, Tensor};

/// Sentinel target marking rows excluded from the loss.
pub const IGNORE_INDEX: i64 = -100;

#[derive(Debug, Clone)]
pub struct CceConfig {
    /// Vocabulary chunk size; may exceed the vocab (single chunk).
    pub chunk_size: usize,
    /// Label smoothing ε in [0, 1).
    pub label_smoothing: f64,
    /// Z-loss weight λ_z ≥ 0.
    pub z_weight: f64,
    /// Target id excluded from the loss (default −100).
    pub ignore_index: i64,
    /// Accumulation precision; `F32` turns on Kahan compensation for the
    /// exp-sums so the emulated single-precision path stays accurate.
    pub precision: Precision,
}

impl Default for CceConfig {
    fn default() -> Self {
        Self {
            chunk_size: 4096,
            label_smoothing: 0.0,
            z_weight: 0.0,
            ignore_index: IGNORE_INDEX,
            precision: Precision::F64,
        }
    }
}

impl CceConfig {
    pub fn with_chunk_size(chunk_size: usize) -> Self {
        Self {
            chunk_size,
            ..Self::default()
        }
    }

    fn validate(&self, vocab: usize, targets: &[i64]) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::InvalidArgument(
                "cce: chunk_size must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidArgument(
                "cce: label_smoothing must be in [0, 1)".into(),
            ));
        }
        if self.z_weight < 0.0 {
            return Err(Error::InvalidArgument("cce: z_weight must be >= 0".into()));
        }
        for &t in targets {
            if t != self.ignore_index && (t < 0 || t as usize >= vocab) {
                return Err(Error::TargetOutOfRange { target: t, vocab });
            }
        }
        Ok(())
    }
}

/// Per-row results. `loss_i = lse_i − target_logit_i` plus the smoothing and
/// z-loss terms when enabled; ignored rows carry loss 0.
#[derive(Debug, Clone)]
pub struct CceResult {
    pub loss: Vec<f64>,
    pub lse: Vec<f64>,
    pub target_logit: Vec<f64>,
    /// Σ_j z_j per row; needed by the smoothing term and the backward pass.
    pub logit_sum: Vec<f64>,
    /// Rows that actually contribute to the mean.
    pub n_valid: usize,
}

impl CceResult {
    /// Mean loss over non-ignored rows (0 when everything is ignored).
    pub fn mean_loss(&self) -> f64 {
        if self.n_valid == 0 {
            return 0.0;
        }
        self.loss.iter().sum::<f64>() / self.n_valid as f64
    }
}

/// Peak auxiliary storage used by the chunked paths, in f64 counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct CceMemStats {
    /// Largest logits workspace held at any point (the buffer that would be
    /// `rows × V` in the naive implementation).
    pub peak_workspace_reals: usize,
    /// Per-row running state (`m`, `d`, target logit, logit sum).
    pub state_reals: usize,
}

fn row_loss(lse: f64, target_logit: f64, logit_sum: f64, vocab: usize, cfg: &CceConfig) -> f64 {
    let base = lse - target_logit;
    let mut loss = if cfg.label_smoothing > 0.0 {
        let uniform = lse - logit_sum / vocab as f64;
        (1.0 - cfg.label_smoothing) * base + cfg.label_smoothing * uniform
    } else {
        base
    };
    if cfg.z_weight > 0.0 {
        loss += cfg.z_weight * lse * lse;
    }
    loss
}

/// Full-materialization oracle over explicit logits `[rows × V]`.
pub fn ce_naive(logits: &Tensor, targets: &[i64], cfg: &CceConfig) -> Result<CceResult> {
    let rows = logits.rows();
    let vocab = logits.cols();
    if targets.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "ce_naive: {} targets for {rows} rows",
            targets.len()
        )));
    }
    cfg.validate(vocab, targets)?;

    let mut out = CceResult {
        loss: vec![0.0; rows],
        lse: vec![0.0; rows],
        target_logit: vec![0.0; rows],
        logit_sum: vec![0.0; rows],
        n_valid: 0,
    };
    for i in 0..rows {
        if targets[i] == cfg.ignore_index {
            continue;
        }
        let z = logits.row(i);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut d = 0.0;
        let mut zsum = 0.0;
        for &zj in z {
            d += (zj - m).exp();
            zsum += zj;
        }
        let lse = d.ln() + m;
        let zt = z[targets[i] as usize];
        out.lse[i] = lse;
        out.target_logit[i] = zt;
        out.logit_sum[i] = zsum;
        out.loss[i] = row_loss(lse, zt, zsum, vocab, cfg);
        out.n_valid += 1;
    }
    Ok(out)
}

/// Gradient of the per-row loss with respect to logit `j`, given the
/// softmax probability `p_j`. Shared by the naive and chunked backward.
#[inline]
fn logit_grad(p: f64, is_target: bool, lse: f64, vocab: usize, cfg: &CceConfig) -> f64 {
    let eps = cfg.label_smoothing;
    let mut g = p;
    if is_target {
        g -= 1.0 - eps;
    }
    if eps > 0.0 {
        g -= eps / vocab as f64;
    }
    if cfg.z_weight > 0.0 {
        g += 2.0 * cfg.z_weight * lse * p;
    }
    g
}

/// Chunked fused-linear forward: `hidden [rows × H] · lm_weightᵀ [V × H]`
/// streamed in vocabulary chunks. Returns the same numbers as
/// `ce_naive(hidden·Wᵀ)` without materializing the logits.
pub fn cce_fwd(
    hidden: &Tensor,
    lm_weight: &Tensor,
    targets: &[i64],
    cfg: &CceConfig,
) -> Result<CceResult> {
    Ok(cce_fwd_with_stats(hidden, lm_weight, targets, cfg)?.0)
}

/// Instrumented variant exposing peak auxiliary allocation.
pub fn cce_fwd_with_stats(
    hidden: &Tensor,
    lm_weight: &Tensor,
    targets: &[i64],
    cfg: &CceConfig,
) -> Result<(CceResult, CceMemStats)> {
    let rows = hidden.rows();
    let h = hidden.cols();
    let vocab = lm_weight.rows();
    if lm_weight.cols() != h {
        return Err(Error::ShapeMismatch(format!(
            "cce: hidden width {h} vs lm_weight width {}",
            lm_weight.cols()
        )));
    }
    if targets.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "cce: {} targets for {rows} rows",
            targets.len()
        )));
    }
    cfg.validate(vocab, targets)?;

    let c = cfg.chunk_size.min(vocab);
    let mut states = vec![OnlineSoftmaxState::new(); rows];
    let mut target_logit = vec![0.0; rows];
    let mut zsum = vec![0.0f64; rows];
    // One [rows × chunk] workspace reused across chunks; this is the whole
    // point of the exercise.
    let mut workspace = vec![0.0f64; rows * c];
    let stats = CceMemStats {
        peak_workspace_reals: rows * c,
        state_reals: 4 * rows,
    };

    let mut chunk_start = 0;
    while chunk_start < vocab {
        let chunk_end = (chunk_start + c).min(vocab);
        let width = chunk_end - chunk_start;
        for i in 0..rows {
            if targets[i] == cfg.ignore_index {
                continue;
            }
            let hrow = hidden.row(i);
            let zrow = &mut workspace[i * c..i * c + width];
            for (out, j) in zrow.iter_mut().zip(chunk_start..chunk_end) {
                let wrow = lm_weight.row(j);
                let mut acc = 0.0;
                for (&a, &b) in hrow.iter().zip(wrow.iter()) {
                    acc += a * b;
                }
                *out = acc;
            }
            // Same accumulation order as the naive oracle: running max first,
            // then the shifted exponentials in ascending vocab order.
            let chunk_max = zrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let st = &mut states[i];
            let m_new = st.m.max(chunk_max);
            let mut d = st.d * (st.m - m_new).exp();
            if cfg.precision == Precision::F32 {
                let mut kahan = KahanAccumulator::new(Precision::F32);
                kahan.add(d);
                for &z in zrow.iter() {
                    kahan.add((z - m_new).exp());
                }
                d = kahan.value();
            } else {
                for &z in zrow.iter() {
                    d += (z - m_new).exp();
                }
            }
            st.m = m_new;
            st.d = d;
            for &z in zrow.iter() {
                zsum[i] += z;
            }
            let t = targets[i];
            if t >= chunk_start as i64 && t < chunk_end as i64 {
                target_logit[i] = zrow[(t - chunk_start as i64) as usize];
            }
        }
        chunk_start = chunk_end;
    }
    drop(workspace);

    let mut out = CceResult {
        loss: vec![0.0; rows],
        lse: vec![0.0; rows],
        target_logit: vec![0.0; rows],
        logit_sum: vec![0.0; rows],
        n_valid: 0,
    };
    for i in 0..rows {
        if targets[i] == cfg.ignore_index {
            continue;
        }
        let lse = states[i].logsumexp();
        out.lse[i] = lse;
        out.target_logit[i] = target_logit[i];
        out.logit_sum[i] = zsum[i];
        out.loss[i] = row_loss(lse, target_logit[i], out.logit_sum[i], vocab, cfg);
        out.n_valid += 1;
    }
    Ok((out, stats))
}

/// Chunked backward: recomputes each logit chunk, forms
/// `p_j = exp(z_j − lse)`, subtracts the (smoothed) target indicator, adds
/// the z-loss term, and divides by the count of non-ignored rows (mean
/// reduction). Returns `(dhidden, dweight)` as fresh tensors.
pub fn cce_bwd(
    hidden: &Tensor,
    lm_weight: &Tensor,
    targets: &[i64],
    result: &CceResult,
    cfg: &CceConfig,
) -> Result<(Tensor, Tensor)> {
    let rows = hidden.rows();
    let h = hidden.cols();
    let vocab = lm_weight.rows();
    if lm_weight.cols() != h {
        return Err(Error::ShapeMismatch(format!(
            "cce_bwd: hidden width {h} vs lm_weight width {}",
            lm_weight.cols()
        )));
    }
    if result.lse.len() != rows {
        return Err(Error::InvalidArgument(
            "cce_bwd: result does not match forward".into(),
        ));
    }
    cfg.validate(vocab, targets)?;
    let c = cfg.chunk_size.min(vocab);
    let inv_n = if result.n_valid == 0 {
        0.0
    } else {
        1.0 / result.n_valid as f64
    };

    let mut dhidden = Tensor::zeros(hidden.shape());
    let mut dweight = Tensor::zeros(lm_weight.shape());
    let mut grads = vec![0.0f64; c];

    let mut chunk_start = 0;
    while chunk_start < vocab {
        let chunk_end = (chunk_start + c).min(vocab);
        for i in 0..rows {
            if targets[i] == cfg.ignore_index {
                continue;
            }
            let hrow = hidden.row(i);
            let lse = result.lse[i];
            let t = targets[i] as usize;
            for (g, j) in grads.iter_mut().zip(chunk_start..chunk_end) {
                let wrow = lm_weight.row(j);
                let mut z = 0.0;
                for (&a, &b) in hrow.iter().zip(wrow.iter()) {
                    z += a * b;
                }
                let p = (z - lse).exp();
                *g = logit_grad(p, j == t, lse, vocab, cfg) * inv_n;
            }
            let width = chunk_end - chunk_start;
            let dh = dhidden.row_mut(i);
            for (g, j) in grads[..width].iter().zip(chunk_start..chunk_end) {
                if *g == 0.0 {
                    continue;
                }
                let wrow = lm_weight.row(j);
                for (d, &w) in dh.iter_mut().zip(wrow.iter()) {
                    *d += g * w;
                }
                let dw = dweight.row_mut(j);
                for (d, &hv) in dw.iter_mut().zip(hrow.iter()) {
                    *d += g * hv;
                }
            }
        }
        chunk_start = chunk_end;
    }
    Ok((dhidden, dweight))
}

/// Gradient of the mean loss with respect to explicit logits — oracle-side
/// counterpart of `cce_bwd`, used to check it through the chain rule.
pub fn ce_naive_logit_grad(
    logits: &Tensor,
    targets: &[i64],
    result: &CceResult,
    cfg: &CceConfig,
) -> Result<Tensor> {
    let rows = logits.rows();
    let vocab = logits.cols();
    cfg.validate(vocab, targets)?;
    let inv_n = if result.n_valid == 0 {
        0.0
    } else {
        1.0 / result.n_valid as f64
    };
    let mut grad = Tensor::zeros(logits.shape());
    for i in 0..rows {
        if targets[i] == cfg.ignore_index {
            continue;
        }
        let lse = result.lse[i];
        let t = targets[i] as usize;
        let z = logits.row(i);
        let g = grad.row_mut(i);
        for j in 0..vocab {
            let p = (z[j] - lse).exp();
            g[j] = logit_grad(p, j == t, lse, vocab, cfg) * inv_n;
        }
    }
    Ok(grad)
}

/// Chunk-size policy: the vocab-tier table (4096 / 8192 / 16384) wins
/// whenever the memory budget permits it, otherwise the budget decides;
/// always capped at the vocabulary size.
pub fn select_chunk_size(vocab: usize, sram_budget_bytes: usize, rows: usize) -> usize {
    let tier = if vocab < 65_536 {
        4096
    } else if vocab < 131_072 {
        8192
    } else {
        16_384
    };
    let budget_c = (sram_budget_bytes / (rows.max(1) * 4)).max(1);
    let c = if budget_c >= tier { tier } else { budget_c };
    c.min(vocab).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{assert_close, central_diff, max_abs_diff, max_rel_err};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_loss_is_log_vocab() {
        let v = 97;
        let logits = Tensor::zeros(&[3, v]);
        let res = ce_naive(&logits, &[0, 42, 96], &CceConfig::default()).unwrap();
        for &l in &res.loss {
            assert_close(l, (v as f64).ln(), 1e-12);
        }
    }

    #[test]
    fn smoothing_blends_with_uniform_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = 31;
        let logits = Tensor::randn(&[4, v], 2.0, &mut rng);
        let targets = [3i64, 7, 0, 30];
        let plain = ce_naive(&logits, &targets, &CceConfig::default()).unwrap();
        let cfg = CceConfig {
            label_smoothing: 0.1,
            ..Default::default()
        };
        let smoothed = ce_naive(&logits, &targets, &cfg).unwrap();
        for i in 0..4 {
            let uniform = plain.lse[i] - plain.logit_sum[i] / v as f64;
            let expect = 0.9 * plain.loss[i] + 0.1 * uniform;
            assert_close(smoothed.loss[i], expect, 1e-12);
        }
    }

    #[test]
    fn z_loss_term_on_uniform_logits() {
        let v = 97;
        let logits = Tensor::zeros(&[1, v]);
        let cfg = CceConfig {
            z_weight: 1e-4,
            ..Default::default()
        };
        let res = ce_naive(&logits, &[5], &cfg).unwrap();
        let lnv = (v as f64).ln();
        assert_close(res.loss[0] - lnv, 1e-4 * lnv * lnv, 1e-12);
        assert_close(res.loss[0] - lnv, 2.093e-3, 1e-6);
    }

    #[test]
    fn target_out_of_range_rejected() {
        let logits = Tensor::zeros(&[1, 5]);
        assert!(ce_naive(&logits, &[5], &CceConfig::default()).is_err());
        assert!(ce_naive(&logits, &[-3], &CceConfig::default()).is_err());
    }

    #[test]
    fn zero_chunk_size_rejected() {
        let hidden = Tensor::zeros(&[1, 4]);
        let w = Tensor::zeros(&[5, 4]);
        let cfg = CceConfig::with_chunk_size(0);
        assert!(cce_fwd(&hidden, &w, &[0], &cfg).is_err());
    }

    #[test]
    fn mismatched_result_rejected_in_backward() {
        let hidden = Tensor::zeros(&[2, 4]);
        let w = Tensor::zeros(&[5, 4]);
        let cfg = CceConfig::with_chunk_size(5);
        let res = cce_fwd(&hidden, &w, &[0, 1], &cfg).unwrap();
        let bigger = Tensor::zeros(&[3, 4]);
        assert!(cce_bwd(&bigger, &w, &[0, 1, 2], &res, &cfg).is_err());
    }

    #[test]
    fn single_chunk_is_bit_equal_to_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (rows, h, v) = (5, 8, 37);
        let hidden = Tensor::randn(&[rows, h], 1.0, &mut rng);
        let w = Tensor::randn(&[v, h], 1.0, &mut rng);
        let targets: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..v as i64)).collect();
        let mut cfg = CceConfig::with_chunk_size(v);
        cfg.label_smoothing = 0.1;
        cfg.z_weight = 1e-4;
        let logits = hidden.matmul_transb(&w).unwrap();
        let naive = ce_naive(&logits, &targets, &cfg).unwrap();
        let chunked = cce_fwd(&hidden, &w, &targets, &cfg).unwrap();
        assert_eq!(
            naive.loss, chunked.loss,
            "single-chunk path must be bit-equal"
        );
        assert_eq!(naive.lse, chunked.lse);
    }

    #[test]
    fn non_dividing_chunk_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (rows, h, v) = (8, 16, 1000);
        let hidden = Tensor::randn(&[rows, h], 1.0, &mut rng);
        let w = Tensor::randn(&[v, h], 0.5, &mut rng);
        let mut targets: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..v as i64)).collect();
        targets[2] = IGNORE_INDEX;
        let cfg = CceConfig::with_chunk_size(96);
        let logits = hidden.matmul_transb(&w).unwrap();
        let naive = ce_naive(&logits, &targets, &cfg).unwrap();
        let chunked = cce_fwd(&hidden, &w, &targets, &cfg).unwrap();
        assert!(max_abs_diff(&naive.loss, &chunked.loss) <= 1e-10);
        assert_eq!(chunked.loss[2], 0.0);
        assert_eq!(chunked.n_valid, rows - 1);
    }

    #[test]
    fn workspace_bounded_by_rows_times_chunk() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (rows, h, v) = (6, 8, 500);
        let hidden = Tensor::randn(&[rows, h], 1.0, &mut rng);
        let w = Tensor::randn(&[v, h], 1.0, &mut rng);
        let targets: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..v as i64)).collect();
        let cfg = CceConfig::with_chunk_size(64);
        let (_, stats) = cce_fwd_with_stats(&hidden, &w, &targets, &cfg).unwrap();
        assert!(stats.peak_workspace_reals <= rows * cfg.chunk_size);
        assert!(stats.state_reals <= 8 * rows);
    }

    #[test]
    fn perfect_prediction_has_near_zero_grad() {
        let mut hidden = Tensor::zeros(&[1, 4]);
        hidden.data_mut()[0] = 1.0;
        let mut w = Tensor::zeros(&[6, 4]);
        w.set(3, 0, 50.0); // target logit dominates
        let targets = [3i64];
        let cfg = CceConfig::with_chunk_size(6);
        let res = cce_fwd(&hidden, &w, &targets, &cfg).unwrap();
        let (dh, dw) = cce_bwd(&hidden, &w, &targets, &res, &cfg).unwrap();
        assert!(dh.iter().all(|g| g.abs() < 1e-15));
        assert!(dw.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn logit_gradient_rows_sum_to_zero_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (rows, v) = (6, 50);
        let logits = Tensor::randn(&[rows, v], 3.0, &mut rng);
        let targets: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..v as i64)).collect();
        let cfg = CceConfig::default();
        let res = ce_naive(&logits, &targets, &cfg).unwrap();
        let g = ce_naive_logit_grad(&logits, &targets, &res, &cfg).unwrap();
        for i in 0..rows {
            let row_sum: f64 = g.row(i).iter().sum();
            assert!(row_sum.abs() < 1e-12, "row sum {row_sum}");
            // ∂L/∂z is softmax − onehot scaled by 1/n, so n·g is in [−1, 1].
            for &gj in g.row(i) {
                assert!((gj * res.n_valid as f64).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn chunked_backward_matches_oracle_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (rows, h, v) = (5, 8, 73);
        let hidden = Tensor::randn(&[rows, h], 1.0, &mut rng);
        let w = Tensor::randn(&[v, h], 0.7, &mut rng);
        let mut targets: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..v as i64)).collect();
        targets[0] = IGNORE_INDEX;
        for (eps, zw) in [(0.0, 0.0), (0.1, 0.0), (0.0, 1e-4), (0.05, 1e-3)] {
            let mut cfg = CceConfig::with_chunk_size(16);
            cfg.label_smoothing = eps;
            cfg.z_weight = zw;
            let res = cce_fwd(&hidden, &w, &targets, &cfg).unwrap();
            let (dh, dw) = cce_bwd(&hidden, &w, &targets, &res, &cfg).unwrap();

            // Oracle: explicit logits, explicit logit gradient, chain rule.
            let logits = hidden.matmul_transb(&w).unwrap();
            let naive = ce_naive(&logits, &targets, &cfg).unwrap();
            let gz = ce_naive_logit_grad(&logits, &targets, &naive, &cfg).unwrap();
            let dh_ref = gz.matmul(&w).unwrap();
            let dw_ref = gz.matmul_transa(&hidden).unwrap();
            assert!(max_abs_diff(dh.data(), dh_ref.data()) < 1e-9);
            assert!(max_abs_diff(dw.data(), dw_ref.data()) < 1e-9);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (rows, h, v, c) = (4, 8, 50, 16);
        let hidden = Tensor::randn(&[rows, h], 0.5, &mut rng);
        let w = Tensor::randn(&[v, h], 0.5, &mut rng);
        let targets: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..v as i64)).collect();
        let cfg = CceConfig::with_chunk_size(c);
        let res = cce_fwd(&hidden, &w, &targets, &cfg).unwrap();
        let (dh, dw) = cce_bwd(&hidden, &w, &targets, &res, &cfg).unwrap();

        let num_dh = central_diff(&hidden, 1e-5, |ht| {
            cce_fwd(ht, &w, &targets, &cfg).unwrap().mean_loss()
        });
        let num_dw = central_diff(&w, 1e-5, |wt| {
            cce_fwd(&hidden, wt, &targets, &cfg).unwrap().mean_loss()
        });
        assert!(max_rel_err(dh.data(), num_dh.data()) < 1e-5);
        assert!(max_rel_err(dw.data(), num_dw.data()) < 1e-5);
    }

    #[test]
    fn z_loss_gradient_matches_analytic_term() {
        // d(λ·lse²)/dz_j = 2λ·lse·softmax_j, checked against the difference
        // of gradients with and without the term.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (rows, v) = (3, 20);
        let logits = Tensor::randn(&[rows, v], 1.0, &mut rng);
        let targets: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..v as i64)).collect();
        let plain_cfg = CceConfig::default();
        let z_cfg = CceConfig {
            z_weight: 1e-3,
            ..Default::default()
        };
        let plain_res = ce_naive(&logits, &targets, &plain_cfg).unwrap();
        let z_res = ce_naive(&logits, &targets, &z_cfg).unwrap();
        let g_plain = ce_naive_logit_grad(&logits, &targets, &plain_res, &plain_cfg).unwrap();
        let g_z = ce_naive_logit_grad(&logits, &targets, &z_res, &z_cfg).unwrap();
        for i in 0..rows {
            let sm = crate::numerics::stable_softmax(logits.row(i));
            for j in 0..v {
                let expect = 2.0 * 1e-3 * plain_res.lse[i] * sm.probs[j] / rows as f64;
                assert_close(g_z.at(i, j) - g_plain.at(i, j), expect, 1e-12);
            }
        }
    }

    #[test]
    fn chunk_size_policy() {
        let budget = 192 * 1024; // one SM worth of SRAM
        assert_eq!(select_chunk_size(32_000, budget, 1), 4096);
        assert_eq!(select_chunk_size(151_936, budget, 1), 16_384);
        assert_eq!(select_chunk_size(100, budget, 1), 100);
        // Tight budget: the tier loses.
        assert_eq!(select_chunk_size(32_000, 4 * 512, 1), 512);
        assert_eq!(select_chunk_size(32_000, 4 * 512, 4), 128);
    }
}
