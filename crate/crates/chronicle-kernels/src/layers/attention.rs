//! Scaled dot-product attention: `softmax(QKᵀ/√d)·V`.
//!
//! Two implementations with identical semantics:
//! - [`attention_naive`] materializes the score matrix row by row — the
//!   oracle.
//! - [`attention_tiled`] streams over `block_q × block_kv` tiles keeping the
//!   running `(m, ℓ, O)` rescaling state per query row and never holds more
//!   than one tile of scores.
//!
//! Both accept an optional `segments` boundary array (cu_seqlens) that
//! restricts attention to block-diagonal regions, which is how packed
//! batches keep sequences isolated. Rows with no visible key produce zeros
//! and are reported as degenerate instead of NaN.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AttentionConfig {
    pub n_heads: usize,
    pub head_dim: usize,
    pub causal: bool,
    /// Query tile extent (need not divide the sequence length).
    pub block_q: usize,
    /// Key/value tile extent.
    pub block_kv: usize,
}

impl AttentionConfig {
    pub fn validate(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<()> {
        if self.head_dim < 2 || self.n_heads == 0 {
            return Err(Error::InvalidArgument(
                "attention: need head_dim >= 2 and n_heads >= 1".into(),
            ));
        }
        if self.block_q == 0 || self.block_kv == 0 {
            return Err(Error::InvalidArgument(
                "attention: block sizes must be >= 1".into(),
            ));
        }
        let width = self.n_heads * self.head_dim;
        for (name, t) in [("q", q), ("k", k), ("v", v)] {
            if t.cols() != width {
                return Err(Error::ShapeMismatch(format!(
                    "attention: {name} width {} != n_heads*head_dim {width}",
                    t.cols()
                )));
            }
        }
        q.require_same_shape(k, "attention q/k")?;
        q.require_same_shape(v, "attention q/v")?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `[N × n_heads·head_dim]`, same layout as the inputs.
    pub out: Tensor,
    /// Query rows that could not attend to any key (output zeroed).
    pub degenerate_rows: Vec<usize>,
}

/// Maps each row index to its segment id given cu_seqlens boundaries.
fn segment_ids(n: usize, segments: Option<&[usize]>) -> Result<Vec<usize>> {
    match segments {
        None => Ok(vec![0; n]),
        Some(cu) => {
            if cu.first() != Some(&0)
                || cu.last() != Some(&n)
                || cu.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(Error::InvalidArgument(format!(
                    "attention: cu_seqlens {cu:?} must rise strictly from 0 to {n}"
                )));
            }
            let mut ids = vec![0; n];
            for (seg, w) in cu.windows(2).enumerate() {
                for id in ids.iter_mut().take(w[1]).skip(w[0]) {
                    *id = seg;
                }
            }
            Ok(ids)
        }
    }
}

/// Full score-matrix reference. `q/k/v: [N × n_heads·head_dim]`.
pub fn attention_naive(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    config: &AttentionConfig,
    segments: Option<&[usize]>,
) -> Result<AttentionOutput> {
    config.validate(q, k, v)?;
    let n = q.rows();
    let dh = config.head_dim;
    let scale = 1.0 / (dh as f64).sqrt();
    let seg = segment_ids(n, segments)?;

    let mut out = Tensor::zeros(q.shape());
    let mut degenerate = Vec::new();
    for h in 0..config.n_heads {
        let off = h * dh;
        for i in 0..n {
            let qi = &q.row(i)[off..off + dh];
            let mut scores = vec![f64::NEG_INFINITY; n];
            let mut any = false;
            for (j, s) in scores.iter_mut().enumerate() {
                if seg[j] != seg[i] || (config.causal && j > i) {
                    continue;
                }
                let kj = &k.row(j)[off..off + dh];
                *s = qi.iter().zip(kj.iter()).map(|(a, b)| a * b).sum::<f64>() * scale;
                any = true;
            }
            if !any {
                if h == 0 {
                    degenerate.push(i);
                }
                continue; // output row stays zero
            }
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            let mut weights = vec![0.0; n];
            for (w, &s) in weights.iter_mut().zip(scores.iter()) {
                if s > f64::NEG_INFINITY {
                    *w = (s - m).exp();
                    denom += *w;
                }
            }
            let orow = &mut out.row_mut(i)[off..off + dh];
            for (j, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let p = w / denom;
                let vj = &v.row(j)[off..off + dh];
                for (o, &vv) in orow.iter_mut().zip(vj.iter()) {
                    *o += p * vv;
                }
            }
        }
    }
    Ok(AttentionOutput {
        out,
        degenerate_rows: degenerate,
    })
}

/// Tiled streaming attention. Never materializes the `N×N` score matrix;
/// per query row it keeps a running maximum `m`, normalizer `ℓ`, and
/// unnormalized output accumulator, rescaling by `exp(m_old − m_new)`
/// whenever a tile raises the maximum. Ragged final tiles are shrunk.
pub fn attention_tiled(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    config: &AttentionConfig,
    segments: Option<&[usize]>,
) -> Result<AttentionOutput> {
    config.validate(q, k, v)?;
    let n = q.rows();
    let dh = config.head_dim;
    let scale = 1.0 / (dh as f64).sqrt();
    let seg = segment_ids(n, segments)?;
    let bq = config.block_q;
    let bkv = config.block_kv;

    let mut out = Tensor::zeros(q.shape());
    let mut degenerate = Vec::new();
    let mut scores = vec![0.0f64; bkv];
    for h in 0..config.n_heads {
        let off = h * dh;
        let mut q_start = 0;
        while q_start < n {
            let q_end = (q_start + bq).min(n);
            // Per-row running state for this query tile.
            let mut m = vec![f64::NEG_INFINITY; q_end - q_start];
            let mut l = vec![0.0f64; q_end - q_start];
            let mut acc = vec![vec![0.0f64; dh]; q_end - q_start];

            let mut kv_start = 0;
            while kv_start < n {
                let kv_end = (kv_start + bkv).min(n);
                for (qi, i) in (q_start..q_end).enumerate() {
                    let qrow = &q.row(i)[off..off + dh];
                    let mut tile_max = f64::NEG_INFINITY;
                    let mut any = false;
                    for (sj, j) in (kv_start..kv_end).enumerate() {
                        if seg[j] != seg[i] || (config.causal && j > i) {
                            scores[sj] = f64::NEG_INFINITY;
                            continue;
                        }
                        let kj = &k.row(j)[off..off + dh];
                        let s = qrow.iter().zip(kj.iter()).map(|(a, b)| a * b).sum::<f64>() * scale;
                        scores[sj] = s;
                        tile_max = tile_max.max(s);
                        any = true;
                    }
                    if !any {
                        continue;
                    }
                    let m_new = m[qi].max(tile_max);
                    let correction = (m[qi] - m_new).exp();
                    l[qi] *= correction;
                    for a in &mut acc[qi] {
                        *a *= correction;
                    }
                    for (sj, j) in (kv_start..kv_end).enumerate() {
                        if scores[sj] == f64::NEG_INFINITY {
                            continue;
                        }
                        let p = (scores[sj] - m_new).exp();
                        l[qi] += p;
                        let vj = &v.row(j)[off..off + dh];
                        for (a, &vv) in acc[qi].iter_mut().zip(vj.iter()) {
                            *a += p * vv;
                        }
                    }
                    m[qi] = m_new;
                }
                kv_start = kv_end;
            }

            for (qi, i) in (q_start..q_end).enumerate() {
                if l[qi] == 0.0 {
                    if h == 0 {
                        degenerate.push(i);
                    }
                    continue;
                }
                let orow = &mut out.row_mut(i)[off..off + dh];
                for (o, &a) in orow.iter_mut().zip(acc[qi].iter()) {
                    *o = a / l[qi];
                }
            }
            q_start = q_end;
        }
    }
    Ok(AttentionOutput {
        out,
        degenerate_rows: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::max_abs_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(h: usize, dh: usize, causal: bool, bq: usize, bkv: usize) -> AttentionConfig {
        AttentionConfig {
            n_heads: h,
            head_dim: dh,
            causal,
            block_q: bq,
            block_kv: bkv,
        }
    }

    #[test]
    fn single_row_returns_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = Tensor::randn(&[1, 4], 1.0, &mut rng);
        let k = Tensor::randn(&[1, 4], 1.0, &mut rng);
        let v = Tensor::randn(&[1, 4], 1.0, &mut rng);
        let out = attention_naive(&q, &k, &v, &cfg(1, 4, false, 1, 1), None).unwrap();
        assert!(max_abs_diff(out.out.data(), v.data()) < 1e-15);
    }

    #[test]
    fn identical_keys_give_row_mean_of_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 5;
        let q = Tensor::randn(&[n, 4], 1.0, &mut rng);
        let krow: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = Tensor::from_rows(vec![krow; n]);
        let v = Tensor::randn(&[n, 4], 1.0, &mut rng);
        let out = attention_naive(&q, &k, &v, &cfg(1, 4, false, n, n), None).unwrap();
        for i in 0..n {
            for d in 0..4 {
                let mean: f64 = (0..n).map(|j| v.at(j, d)).sum::<f64>() / n as f64;
                assert!((out.out.at(i, d) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn causal_first_row_sees_only_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = Tensor::randn(&[2, 4], 1.0, &mut rng);
        let k = Tensor::randn(&[2, 4], 1.0, &mut rng);
        let v = Tensor::randn(&[2, 4], 1.0, &mut rng);
        let out = attention_naive(&q, &k, &v, &cfg(1, 4, true, 2, 2), None).unwrap();
        assert!(max_abs_diff(&out.out.data()[..4], &v.data()[..4]) < 1e-15);
    }

    #[test]
    fn single_tile_matches_naive_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 12;
        let q = Tensor::randn(&[n, 8], 1.0, &mut rng);
        let k = Tensor::randn(&[n, 8], 1.0, &mut rng);
        let v = Tensor::randn(&[n, 8], 1.0, &mut rng);
        let c = cfg(2, 4, false, n, n);
        let a = attention_naive(&q, &k, &v, &c, None).unwrap();
        let b = attention_tiled(&q, &k, &v, &c, None).unwrap();
        assert!(max_abs_diff(a.out.data(), b.out.data()) < 1e-12);
    }

    #[test]
    fn tiled_matches_naive_on_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..200 {
            let n = rng.gen_range(1..=128);
            let heads = *[1usize, 2, 4]
                .iter()
                .filter(|&&_h| n >= 1)
                .nth(rng.gen_range(0..3))
                .unwrap();
            let dh = *[2usize, 4, 8].get(rng.gen_range(0..3)).unwrap();
            let causal = rng.gen_bool(0.5);
            let bq = rng.gen_range(1..=n.max(1));
            let bkv = rng.gen_range(1..=n.max(1));
            let width = heads * dh;
            let q = Tensor::randn(&[n, width], 1.0, &mut rng);
            let k = Tensor::randn(&[n, width], 1.0, &mut rng);
            let v = Tensor::randn(&[n, width], 1.0, &mut rng);
            let c = cfg(heads, dh, causal, bq, bkv);
            // Half the cases get a random packed-segment structure.
            let cu: Option<Vec<usize>> = if rng.gen_bool(0.5) && n >= 2 {
                let mut cuts = vec![0usize, n];
                for _ in 0..rng.gen_range(0..3) {
                    cuts.push(rng.gen_range(1..n));
                }
                cuts.sort_unstable();
                cuts.dedup();
                Some(cuts)
            } else {
                None
            };
            let a = attention_naive(&q, &k, &v, &c, cu.as_deref()).unwrap();
            let b = attention_tiled(&q, &k, &v, &c, cu.as_deref()).unwrap();
            let diff = max_abs_diff(a.out.data(), b.out.data());
            assert!(
                diff <= 1e-10,
                "case {case}: n={n} heads={heads} dh={dh} causal={causal} bq={bq} bkv={bkv} diff={diff}"
            );
            assert_eq!(a.degenerate_rows, b.degenerate_rows);
        }
    }

    #[test]
    fn causal_ragged_blocks_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 10;
        let q = Tensor::randn(&[n, 8], 1.0, &mut rng);
        let k = Tensor::randn(&[n, 8], 1.0, &mut rng);
        let v = Tensor::randn(&[n, 8], 1.0, &mut rng);
        let c = cfg(1, 8, true, 4, 4);
        let a = attention_naive(&q, &k, &v, &c, None).unwrap();
        let b = attention_tiled(&q, &k, &v, &c, None).unwrap();
        assert!(max_abs_diff(a.out.data(), b.out.data()) < 1e-10);
    }

    #[test]
    fn segments_isolate_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a_len = 3;
        let b_len = 4;
        let n = a_len + b_len;
        let q = Tensor::randn(&[n, 4], 1.0, &mut rng);
        let k = Tensor::randn(&[n, 4], 1.0, &mut rng);
        let v = Tensor::randn(&[n, 4], 1.0, &mut rng);
        let c = cfg(1, 4, true, 3, 3);
        let packed = attention_naive(&q, &k, &v, &c, Some(&[0, a_len, n])).unwrap();

        let slice = |t: &Tensor, from: usize, to: usize| {
            Tensor::from_rows((from..to).map(|i| t.row(i).to_vec()).collect())
        };
        let first = attention_naive(
            &slice(&q, 0, a_len),
            &slice(&k, 0, a_len),
            &slice(&v, 0, a_len),
            &c,
            None,
        )
        .unwrap();
        let second = attention_naive(
            &slice(&q, a_len, n),
            &slice(&k, a_len, n),
            &slice(&v, a_len, n),
            &c,
            None,
        )
        .unwrap();
        let mut stacked = first.out.data().to_vec();
        stacked.extend_from_slice(second.out.data());
        assert!(max_abs_diff(packed.out.data(), &stacked) < 1e-12);
    }

    #[test]
    fn bad_cu_seqlens_rejected() {
        let q = Tensor::zeros(&[4, 4]);
        let c = cfg(1, 4, true, 2, 2);
        assert!(attention_naive(&q, &q, &q, &c, Some(&[0, 2, 3])).is_err());
        assert!(attention_naive(&q, &q, &q, &c, Some(&[1, 4])).is_err());
    }
}
