//! Muon: orthogonalized matrix updates via Newton-Schulz iteration.
//!
//! `X₀ = G/‖G‖_F` (spectral norm ≤ 1), then `X ← 1.5X − 0.5·X·Xᵀ·X`.
//! The iterate converges quadratically to the orthogonal polar factor of
//! `G`; the parameter moves against that factor, so update magnitude is
//! `√min(m,n)` regardless of the gradient's scale.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MUON_DEFAULT_STEPS: usize = 10;
const ZERO_GUARD: f64 = 1e-12;

fn ns_iterate(g: &Tensor, steps: usize) -> Result<Tensor> {
    if g.shape().len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "newton_schulz: need a matrix, got shape {:?}",
            g.shape()
        )));
    }
    let norm = g.frobenius_norm();
    if norm < ZERO_GUARD {
        return Err(Error::InvalidArgument(
            "newton_schulz: zero (or near-zero) matrix".into(),
        ));
    }
    let mut x = g.map(|v| v / norm);
    for _ in 0..steps {
        // X ← 1.5·X − 0.5·(X·Xᵀ)·X
        let xxt = x.matmul_transb(&x)?;
        let b = xxt.matmul(&x)?;
        x = x.zip_map(&b, |xv, bv| 1.5 * xv - 0.5 * bv)?;
    }
    Ok(x)
}

/// Orthogonal polar factor approximation after `steps` iterations. The
/// result is not rescaled by `‖G‖_F` — magnitude normalization is the
/// point of the method.
pub fn newton_schulz(g: &Tensor, steps: usize) -> Result<Tensor> {
    ns_iterate(g, steps)
}

/// Variant with the trailing `‖G‖_F` rescale for callers that want the
/// polar decomposition `G ≈ Q·S` magnitude restored.
pub fn newton_schulz_literal(g: &Tensor, steps: usize) -> Result<Tensor> {
    let norm = g.frobenius_norm();
    let mut x = ns_iterate(g, steps)?;
    x.scale(norm);
    Ok(x)
}

/// `θ ← θ − η·orth(g)`. Near-zero gradients are a no-op; non-matrix
/// parameters are rejected here — the trainer routes those to AdamW.
pub fn muon_step(theta: &mut Tensor, grad: &Tensor, eta: f64, steps: usize) -> Result<()> {
    theta.require_same_shape(grad, "muon_step")?;
    if !grad.all_finite() {
        return Err(Error::NonFiniteGradient);
    }
    if grad.frobenius_norm() < ZERO_GUARD {
        return Ok(());
    }
    let q = newton_schulz(grad, steps)?;
    for (p, &u) in theta.data_mut().iter_mut().zip(q.iter()) {
        *p -= eta * u;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{assert_close, max_abs_diff};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random matrix with singular values in `[smin, smax]`: orthogonal
    /// factors from Gram-Schmidt on Gaussian draws around a diagonal core.
    fn well_conditioned(n: usize, smin: f64, smax: f64, rng: &mut ChaCha8Rng) -> Tensor {
        let orthonormal = |rng: &mut ChaCha8Rng| {
            let mut q = Tensor::randn(&[n, n], 1.0, rng);
            for i in 0..n {
                for j in 0..i {
                    let dot: f64 = q
                        .row(i)
                        .iter()
                        .zip(q.row(j).iter())
                        .map(|(a, b)| a * b)
                        .sum();
                    let prev = q.row(j).to_vec();
                    for (v, p) in q.row_mut(i).iter_mut().zip(prev.iter()) {
                        *v -= dot * p;
                    }
                }
                let norm: f64 = q.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in q.row_mut(i) {
                    *v /= norm;
                }
            }
            q
        };
        let q1 = orthonormal(rng);
        let q2 = orthonormal(rng);
        let mut d = Tensor::zeros(&[n, n]);
        for i in 0..n {
            d.set(i, i, rng.gen_range(smin..smax));
        }
        q1.matmul(&d).unwrap().matmul(&q2).unwrap()
    }

    fn gram_residual(x: &Tensor) -> f64 {
        // ‖XᵀX − I‖_F over the smaller side.
        let (m, n) = (x.rows(), x.cols());
        let gram = if m >= n {
            x.matmul_transa(x).unwrap()
        } else {
            x.matmul_transb(x).unwrap()
        };
        let k = m.min(n);
        let mut sq = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = gram.at(i, j) - target;
                sq += d * d;
            }
        }
        sq.sqrt()
    }

    /// Polar factor via Jacobi eigendecomposition of GᵀG: Q = G·(GᵀG)^(-1/2).
    /// Independent of the Newton-Schulz path.
    fn polar_oracle(g: &Tensor) -> Tensor {
        let n = g.cols();
        let mut a = g.matmul_transa(g).unwrap(); // GᵀG, symmetric n×n
        let mut v = Tensor::zeros(&[n, n]);
        for i in 0..n {
            v.set(i, i, 1.0);
        }
        // Cyclic Jacobi sweeps.
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a.at(p, q) * a.at(p, q);
                }
            }
            if off.sqrt() < 1e-14 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.at(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (a.at(q, q) - a.at(p, p)) / apq;
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.at(k, p);
                        let akq = a.at(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.at(p, k);
                        let aqk = a.at(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.at(k, p);
                        let vkq = v.at(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        // (GᵀG)^(-1/2) = V·diag(1/√λ)·Vᵀ
        let mut inv_sqrt = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += v.at(i, k) * v.at(j, k) / a.at(k, k).max(1e-300).sqrt();
                }
                inv_sqrt.set(i, j, acc);
            }
        }
        g.matmul(&inv_sqrt).unwrap()
    }

    #[test]
    fn rotation_matrix_is_a_fixed_point_family() {
        let angle = 0.7f64;
        let g = Tensor::from_rows(vec![
            vec![angle.cos(), -angle.sin()],
            vec![angle.sin(), angle.cos()],
        ]);
        let x = newton_schulz(&g, 10).unwrap();
        assert!(gram_residual(&x) < 1e-6);
        // Same direction as G: X ≈ G / ‖G‖·√2... the polar factor of an
        // orthogonal matrix is itself.
        let scaled = g.clone();
        assert!(max_abs_diff(x.data(), scaled.data()) < 1e-3);
    }

    #[test]
    fn random_matrix_orthogonalizes_within_ten_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let g = well_conditioned(8, 0.5, 1.5, &mut rng);
            let x = newton_schulz(&g, 10).unwrap();
            assert!(gram_residual(&x) <= 1e-3, "residual {}", gram_residual(&x));
        }
    }

    #[test]
    fn matches_polar_factor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for _ in 0..5 {
            // Condition number at most 4, comfortably inside the
            // well-conditioned regime where 10 iterations suffice.
            let g = well_conditioned(8, 0.3, 1.2, &mut rng);
            let x = newton_schulz(&g, 10).unwrap();
            let q = polar_oracle(&g);
            assert!(
                max_abs_diff(x.data(), q.data()) <= 1e-3,
                "diff {}",
                max_abs_diff(x.data(), q.data())
            );
        }
    }

    #[test]
    fn quadratic_convergence_per_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let g = Tensor::randn(&[6, 6], 1.0, &mut rng);
        let mut prev = f64::INFINITY;
        for k in 1..=10 {
            let x = newton_schulz(&g, k).unwrap();
            let r = gram_residual(&x);
            if prev < 1.0 {
                assert!(
                    r <= 1.5 * prev * prev + 1e-12,
                    "step {k}: {r} vs 1.5·{prev}²"
                );
            }
            prev = r;
        }
    }

    #[test]
    fn literal_variant_restores_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let g = Tensor::randn(&[5, 5], 2.0, &mut rng);
        let q = newton_schulz(&g, 8).unwrap();
        let ql = newton_schulz_literal(&g, 8).unwrap();
        let ratio = ql.frobenius_norm() / q.frobenius_norm();
        assert_close(ratio, g.frobenius_norm(), 1e-9);
    }

    #[test]
    fn zero_matrix_rejected_and_muon_guard() {
        let zero = Tensor::zeros(&[3, 3]);
        assert!(newton_schulz(&zero, 5).is_err());
        let mut theta = Tensor::filled(&[3, 3], 1.0);
        let before = theta.clone();
        muon_step(&mut theta, &zero, 0.1, 5).unwrap(); // no-op
        assert_eq!(theta.data(), before.data());
    }

    #[test]
    fn update_scale_invariant_and_norm_sqrt_min_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let g = Tensor::randn(&[8, 4], 1.0, &mut rng);
        let g_scaled = g.map(|v| 37.0 * v);
        let q1 = newton_schulz(&g, 10).unwrap();
        let q2 = newton_schulz(&g_scaled, 10).unwrap();
        assert!(
            max_abs_diff(q1.data(), q2.data()) < 1e-9,
            "polar factor ignores scale"
        );
        let norm = q1.frobenius_norm();
        let expect = (4f64).sqrt();
        assert!(
            (norm - expect).abs() / expect < 0.05,
            "‖Q‖_F = {norm}, want ≈ {expect}"
        );
    }
}
