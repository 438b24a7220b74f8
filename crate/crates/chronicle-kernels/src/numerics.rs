//! Numerically stable scalar/stream primitives: online softmax state,
//! streaming log-sum-exp, stable softmax, and Kahan-compensated summation.
//!
//! The online update keeps a running maximum `m` and a running sum `d` of
//! shifted exponentials; when the maximum moves, the sum is rescaled by
//! `exp(m_old - m_new)` so the invariant `d = Σ exp(x_j - m)` always holds.

use crate::error::{Error, Result};
use crate::tensor::Precision;

/// Streaming log-sum-exp state.
///
/// Starts at `m = -inf, d = 0`; `exp(-inf - m_new)` is 0 in IEEE arithmetic,
/// so the first update needs no special case.
#[derive(Debug, Clone, Copy)]
pub struct OnlineSoftmaxState {
    /// Running maximum.
    pub m: f64,
    /// Running sum of `exp(x_j - m)`.
    pub d: f64,
}

impl Default for OnlineSoftmaxState {
    fn default() -> Self {
        Self::new()
    }
}

impl OnlineSoftmaxState {
    pub fn new() -> Self {
        Self {
            m: f64::NEG_INFINITY,
            d: 0.0,
        }
    }

    /// Fold one element into the state.
    pub fn update(&mut self, x: f64) {
        let m_new = self.m.max(x);
        // 0 * exp(-inf) = 0 * 0 covers the initial state.
        self.d = self.d * (self.m - m_new).exp() + (x - m_new).exp();
        self.m = m_new;
    }

    /// Fold an already-reduced chunk `(m_c, d_c)` into the state.
    ///
    /// Equivalent to updating with every element the chunk summarizes; this
    /// is the cross-chunk accumulation the chunked cross-entropy uses instead
    /// of `log(exp(lse) + exp(lse_c))`, which overflows for large lse.
    pub fn merge(&mut self, m_c: f64, d_c: f64) {
        if d_c == 0.0 {
            return;
        }
        let m_new = self.m.max(m_c);
        self.d = self.d * (self.m - m_new).exp() + d_c * (m_c - m_new).exp();
        self.m = m_new;
    }

    /// `log Σ exp(x_j)` over everything folded in so far.
    pub fn logsumexp(&self) -> f64 {
        self.d.ln() + self.m
    }
}

/// Streaming `log Σ exp(z_j)` over a row. Matches the two-pass result to a
/// few ulp.
pub fn logsumexp(row: &[f64]) -> Result<f64> {
    if row.is_empty() {
        return Err(Error::EmptyReduction);
    }
    let mut state = OnlineSoftmaxState::new();
    for &x in row {
        state.update(x);
    }
    Ok(state.logsumexp())
}

/// Softmax of a row plus a degenerate marker.
#[derive(Debug, Clone)]
pub struct SoftmaxRow {
    pub probs: Vec<f64>,
    /// Set when the row was fully masked (all `-inf`); the probabilities are
    /// then the uniform distribution rather than NaN.
    pub degenerate: bool,
}

/// Max-shifted softmax: entries in `[0, 1]`, summing to 1, invariant under a
/// constant shift of the input.
pub fn stable_softmax(row: &[f64]) -> SoftmaxRow {
    let n = row.len();
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        // Fully masked row: report uniform instead of 0/0.
        return SoftmaxRow {
            probs: vec![1.0 / n as f64; n],
            degenerate: true,
        };
    }
    let mut probs: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    SoftmaxRow {
        probs,
        degenerate: false,
    }
}

/// Compensated accumulator: `sum` plus the running compensation `c` that
/// captures the low-order bits each addition loses.
///
/// In `Precision::F32` mode every arithmetic step is rounded to the f32 grid,
/// emulating single-precision hardware; the compensation then keeps the total
/// error independent of the number of additions.
#[derive(Debug, Clone, Copy)]
pub struct KahanAccumulator {
    pub sum: f64,
    pub c: f64,
    precision: Precision,
}

impl Default for KahanAccumulator {
    fn default() -> Self {
        Self::new(Precision::F64)
    }
}

impl KahanAccumulator {
    pub fn new(precision: Precision) -> Self {
        Self {
            sum: 0.0,
            c: 0.0,
            precision,
        }
    }

    pub fn add(&mut self, x: f64) {
        let p = self.precision;
        let y = p.round(x - self.c);
        let t = p.round(self.sum + y);
        self.c = p.round(p.round(t - self.sum) - y);
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Uncompensated running sum at the given storage precision. Exists so tests
/// and demos can show what the compensation buys.
pub fn naive_sum(values: impl IntoIterator<Item = f64>, precision: Precision) -> f64 {
    let mut sum = 0.0;
    for x in values {
        sum = precision.round(sum + precision.round(x));
    }
    sum
}
