//! Central-finite-difference gradient checking.
//!
//! Every backward pass in this crate is accepted only if it matches the
//! numerical derivative of its forward pass; these helpers are the oracle
//! side of that pairing and deliberately know nothing about any backward
//! implementation.

use crate::tensor::Tensor;

/// Numerical gradient of a scalar function via central differences:
/// `g_i ≈ (f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn central_diff(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Worst per-element relative error with a small absolute floor so exact
/// zeros do not blow the ratio up on finite-difference noise.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Panicking closeness assert for unit tests.
#[track_caller]
pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!(
        (a - b).abs() <= tol,
        "expected {a} ≈ {b} within {tol} (diff {})",
        (a - b).abs()
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let x = Tensor::from_rows(vec![vec![1.0, -2.0, 0.5]]);
        let g = central_diff(&x, 1e-5, |t| t.iter().map(|v| v * v).sum());
        for (gi, xi) in g.iter().zip(x.iter()) {
            assert_close(*gi, 2.0 * xi, 1e-8);
        }
    }
}
