//! The self-check registry behind `chronicle-kernels verify`.
//!
//! One named suite per public operation; each runs the operation against
//! its oracle (brute force, closed form, or finite differences) and fails
//! with a message naming the broken invariant. A unit test pins the
//! registry against the full operation list so coverage cannot silently
//! rot.

use crate::adapters::{
    column_norms, dora_fwd, lora_bwd, lora_fwd, lora_fwd_fused, DoraAdapter, LoraAdapter,
};
use crate::analysis;
use crate::fp8::{self, Fp8Format};
use crate::gradcheck::{central_diff, max_abs_diff, max_rel_err};
use crate::layers;
use crate::layers::AttentionConfig;
use crate::losses::{self, CceConfig};
use crate::numerics::{self, KahanAccumulator, OnlineSoftmaxState};
use crate::optim;
use crate::optim::{AdamWHyper, AdamWState};
use crate::packing;
use crate::tensor::{Precision, Tensor};
use crate::trainer::{
    self, backward, forward_loss, AdapterMode, Batch, Model, ModelConfig, OptimizerChoice,
    TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Suite {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure(
        (a - b).abs() <= tol,
        format!("{what}: {a} vs {b} (tol {tol})"),
    )
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- numerics

fn online_update() -> Result<(), String> {
    let mut s = OnlineSoftmaxState::new();
    s.update(5.0);
    ensure(s.m == 5.0 && s.d == 1.0, format!("first element: {s:?}"))?;
    s.update(5.0);
    ensure(s.d == 2.0, format!("repeated max: {s:?}"))?;
    let mut s = OnlineSoftmaxState::new();
    for x in [3.0, 1.0, 2.0] {
        s.update(x);
    }
    close(s.logsumexp(), 3.40760596444438, 1e-12, "lse of [1,2,3]")
}

fn logsumexp_suite() -> Result<(), String> {
    let mut r = rng(10);
    for _ in 0..100 {
        let n = r.gen_range(1..500);
        let row: Vec<f64> = (0..n).map(|_| r.gen_range(-40.0..40.0)).collect();
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let oracle = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        let got = numerics::logsumexp(&row).map_err(|e| e.to_string())?;
        close(
            got,
            oracle,
            1e-12 * oracle.abs().max(1.0),
            "lse vs two-pass",
        )?;
    }
    ensure(
        numerics::logsumexp(&[]).is_err(),
        "empty row must error".into(),
    )
}

fn stable_softmax_suite() -> Result<(), String> {
    let mut r = rng(11);
    for _ in 0..50 {
        let n = r.gen_range(1..64);
        let row: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let c = r.gen_range(-1e3..1e3);
        let shifted: Vec<f64> = row.iter().map(|&x| x + c).collect();
        let a = numerics::stable_softmax(&row);
        let b = numerics::stable_softmax(&shifted);
        let sum: f64 = a.probs.iter().sum();
        close(sum, 1.0, 1e-12, "softmax sums to 1")?;
        for (&pa, &pb) in a.probs.iter().zip(b.probs.iter()) {
            ensure(
                (0.0..=1.0).contains(&pa),
                format!("prob {pa} outside [0,1]"),
            )?;
            close(pa, pb, 1e-12, "shift invariance")?;
        }
    }
    Ok(())
}

fn kahan_add() -> Result<(), String> {
    let mut kahan = KahanAccumulator::new(Precision::F32);
    kahan.add(1.0);
    let mut naive = 1.0f64;
    for _ in 0..1_000_000 {
        kahan.add(1e-8);
        naive = Precision::F32.round(naive + Precision::F32.round(1e-8));
    }
    ensure(naive == 1.0, format!("naive f32 moved to {naive}"))?;
    close(kahan.value(), 1.01, 1e-6, "compensated f32 sum")
}

// ------------------------------------------------------------------ layers

fn rmsnorm_fwd_suite() -> Result<(), String> {
    let x = Tensor::from_rows(vec![vec![3.0, 4.0]]);
    let g = Tensor::filled(&[2], 1.0);
    let (y, cache) = layers::rmsnorm_fwd(&x, &g, 0.0).map_err(|e| e.to_string())?;
    close(cache.rstd[0], 1.0 / 3.5355339059327378, 1e-12, "rstd")?;
    close(y.at(0, 0), 0.848528137423857, 1e-12, "y0")?;
    close(y.at(0, 1), 1.131370849898476, 1e-12, "y1")
}

fn rmsnorm_bwd_suite() -> Result<(), String> {
    let mut r = rng(12);
    let x = Tensor::randn(&[2, 8], 1.0, &mut r);
    let g = Tensor::randn(&[8], 1.0, &mut r);
    let dy = Tensor::randn(&[2, 8], 1.0, &mut r);
    let (_, cache) = layers::rmsnorm_fwd(&x, &g, 1e-5).map_err(|e| e.to_string())?;
    let (dx, _) = layers::rmsnorm_bwd(&dy, &x, &g, &cache).map_err(|e| e.to_string())?;
    let num = central_diff(&x, 1e-5, |t| {
        let (y, _) = layers::rmsnorm_fwd(t, &g, 1e-5).unwrap();
        y.iter().zip(dy.iter()).map(|(a, b)| a * b).sum()
    });
    ensure(
        max_rel_err(dx.data(), num.data()) < 1e-5,
        format!(
            "rmsnorm dx vs finite differences: {}",
            max_rel_err(dx.data(), num.data())
        ),
    )
}

fn rmsnorm_residual_suite() -> Result<(), String> {
    let mut r = rng(13);
    let x = Tensor::randn(&[3, 6], 1.0, &mut r);
    let res = Tensor::randn(&[3, 6], 1.0, &mut r);
    let g = Tensor::randn(&[6], 1.0, &mut r);
    let (y, new_res, _) =
        layers::rmsnorm_residual_fwd(&x, &res, &g, 1e-6).map_err(|e| e.to_string())?;
    let summed = x.zip_map(&res, |a, b| a + b).unwrap();
    let (y_ref, _) = layers::rmsnorm_fwd(&summed, &g, 1e-6).map_err(|e| e.to_string())?;
    ensure(y.data() == y_ref.data(), "fused != unfused compose".into())?;
    ensure(
        new_res.data() == summed.data(),
        "stored residual wrong".into(),
    )
}

fn swiglu_fwd_suite() -> Result<(), String> {
    let gate = Tensor::filled(&[1, 1], 1.0);
    let up = Tensor::filled(&[1, 1], 2.0);
    let y = layers::swiglu_fwd(&gate, &up).map_err(|e| e.to_string())?;
    close(y.at(0, 0), 1.4621171572600098, 1e-12, "swiglu(1)*2")
}

fn swiglu_bwd_suite() -> Result<(), String> {
    let mut r = rng(14);
    let gate = Tensor::randn(&[2, 6], 1.0, &mut r);
    let up = Tensor::randn(&[2, 6], 1.0, &mut r);
    let dout = Tensor::randn(&[2, 6], 1.0, &mut r);
    let (dgate, dup) = layers::swiglu_bwd(&dout, &gate, &up).map_err(|e| e.to_string())?;
    let num_dgate = central_diff(&gate, 1e-5, |g| {
        layers::swiglu_fwd(g, &up)
            .unwrap()
            .iter()
            .zip(dout.iter())
            .map(|(a, b)| a * b)
            .sum()
    });
    let num_dup = central_diff(&up, 1e-5, |u| {
        layers::swiglu_fwd(&gate, u)
            .unwrap()
            .iter()
            .zip(dout.iter())
            .map(|(a, b)| a * b)
            .sum()
    });
    ensure(
        max_rel_err(dgate.data(), num_dgate.data()) < 1e-5,
        format!(
            "swiglu dgate vs finite differences: {}",
            max_rel_err(dgate.data(), num_dgate.data())
        ),
    )?;
    ensure(
        max_rel_err(dup.data(), num_dup.data()) < 1e-5,
        format!(
            "swiglu dup vs finite differences: {}",
            max_rel_err(dup.data(), num_dup.data())
        ),
    )
}

fn rope_build_cache_suite() -> Result<(), String> {
    let cache = layers::rope_build_cache(8, 4, 10000.0).map_err(|e| e.to_string())?;
    close(cache.cos.at(1, 1), 0.01f64.cos(), 1e-15, "theta_1 = 0.01")?;
    for (c, s) in cache.cos.iter().zip(cache.sin.iter()) {
        close(c * c + s * s, 1.0, 1e-12, "unit circle")?;
    }
    ensure(
        layers::rope_build_cache(4, 5, 10000.0).is_err(),
        "odd head_dim must error".into(),
    )
}

fn rope_apply_suite() -> Result<(), String> {
    let mut r = rng(15);
    let cache = layers::rope_build_cache(65, 8, 10000.0).map_err(|e| e.to_string())?;
    for _ in 0..20 {
        let q = Tensor::randn(&[1, 8], 1.0, &mut r);
        let k = Tensor::randn(&[1, 8], 1.0, &mut r);
        let m = r.gen_range(0..=64usize);
        let n = r.gen_range(m..=64usize);
        let (qm, _) = layers::rope_apply_qk(&q, &q, &[m], &cache).map_err(|e| e.to_string())?;
        close(
            qm.frobenius_norm(),
            q.frobenius_norm(),
            1e-12,
            "norm preservation",
        )?;
        let (_, kn) = layers::rope_apply_qk(&k, &k, &[n], &cache).map_err(|e| e.to_string())?;
        let (_, k_rel) =
            layers::rope_apply_qk(&k, &k, &[n - m], &cache).map_err(|e| e.to_string())?;
        let lhs: f64 = qm.data().iter().zip(kn.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = q.data().iter().zip(k_rel.data()).map(|(a, b)| a * b).sum();
        close(lhs, rhs, 1e-10, "relative-position property")?;
    }
    Ok(())
}

fn dropout_suite() -> Result<(), String> {
    let n = 100_000;
    let x = Tensor::filled(&[n], 1.0);
    let a = layers::dropout_fwd(&x, 0.1, 77, 0).map_err(|e| e.to_string())?;
    let b = layers::dropout_fwd(&x, 0.1, 77, 0).map_err(|e| e.to_string())?;
    ensure(a.data() == b.data(), "dropout must be deterministic".into())?;
    let kept = a.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
    close(kept, 0.9, 0.01, "keep rate at p=0.1")?;
    ensure(
        layers::dropout_fwd(&x, 1.0, 1, 0).is_err(),
        "p=1 must error".into(),
    )
}

fn attention_naive_suite() -> Result<(), String> {
    let mut r = rng(16);
    let q = Tensor::randn(&[1, 4], 1.0, &mut r);
    let k = Tensor::randn(&[1, 4], 1.0, &mut r);
    let v = Tensor::randn(&[1, 4], 1.0, &mut r);
    let cfg = AttentionConfig {
        n_heads: 1,
        head_dim: 4,
        causal: false,
        block_q: 1,
        block_kv: 1,
    };
    let out = layers::attention_naive(&q, &k, &v, &cfg, None).map_err(|e| e.to_string())?;
    ensure(
        max_abs_diff(out.out.data(), v.data()) < 1e-14,
        "N=1 must return V".into(),
    )
}

fn attention_tiled_suite() -> Result<(), String> {
    let mut r = rng(17);
    for case in 0..20 {
        let n = r.gen_range(1..=64);
        let dh = 4;
        let causal = case % 2 == 0;
        let cfg = AttentionConfig {
            n_heads: 2,
            head_dim: dh,
            causal,
            block_q: r.gen_range(1..=n),
            block_kv: r.gen_range(1..=n),
        };
        let q = Tensor::randn(&[n, 2 * dh], 1.0, &mut r);
        let k = Tensor::randn(&[n, 2 * dh], 1.0, &mut r);
        let v = Tensor::randn(&[n, 2 * dh], 1.0, &mut r);
        let a = layers::attention_naive(&q, &k, &v, &cfg, None).map_err(|e| e.to_string())?;
        let b = layers::attention_tiled(&q, &k, &v, &cfg, None).map_err(|e| e.to_string())?;
        let diff = max_abs_diff(a.out.data(), b.out.data());
        ensure(
            diff <= 1e-10,
            format!("case {case}: tiled vs naive diff {diff}"),
        )?;
    }
    Ok(())
}

// ------------------------------------------------------------------ losses

fn ce_naive_suite() -> Result<(), String> {
    let v = 97;
    let logits = Tensor::zeros(&[1, v]);
    let res = losses::ce_naive(&logits, &[13], &CceConfig::default()).map_err(|e| e.to_string())?;
    close(res.loss[0], (v as f64).ln(), 1e-12, "uniform logits loss")?;
    let zcfg = CceConfig {
        z_weight: 1e-4,
        ..Default::default()
    };
    let res_z = losses::ce_naive(&logits, &[13], &zcfg).map_err(|e| e.to_string())?;
    close(
        res_z.loss[0] - res.loss[0],
        1e-4 * (v as f64).ln().powi(2),
        1e-12,
        "z-loss term",
    )
}

fn cce_fwd_suite() -> Result<(), String> {
    let mut r = rng(18);
    for case in 0..20 {
        let rows = r.gen_range(1..8);
        let h = r.gen_range(2..16);
        let v = r.gen_range(5..400);
        let c = [1usize, 7, 64, v, v + 5][case % 5].min(v + 5);
        let hidden = Tensor::randn(&[rows, h], 1.0, &mut r);
        let w = Tensor::randn(&[v, h], 0.5, &mut r);
        let targets: Vec<i64> = (0..rows).map(|_| r.gen_range(0..v as i64)).collect();
        let cfg = CceConfig::with_chunk_size(c);
        let logits = hidden.matmul_transb(&w).unwrap();
        let naive = losses::ce_naive(&logits, &targets, &cfg).map_err(|e| e.to_string())?;
        let (chunked, stats) =
            losses::cce_fwd_with_stats(&hidden, &w, &targets, &cfg).map_err(|e| e.to_string())?;
        let diff = max_abs_diff(&naive.loss, &chunked.loss);
        ensure(diff <= 1e-10, format!("case {case}: cce vs naive {diff}"))?;
        ensure(
            stats.peak_workspace_reals <= rows * c,
            format!(
                "workspace {} above rows*C {}",
                stats.peak_workspace_reals,
                rows * c
            ),
        )?;
    }
    Ok(())
}

fn cce_bwd_suite() -> Result<(), String> {
    let mut r = rng(19);
    let (rows, h, v, c) = (4, 8, 50, 16);
    let hidden = Tensor::randn(&[rows, h], 0.5, &mut r);
    let w = Tensor::randn(&[v, h], 0.5, &mut r);
    let targets: Vec<i64> = (0..rows).map(|_| r.gen_range(0..v as i64)).collect();
    let cfg = CceConfig::with_chunk_size(c);
    let res = losses::cce_fwd(&hidden, &w, &targets, &cfg).map_err(|e| e.to_string())?;
    let (dh, dw) = losses::cce_bwd(&hidden, &w, &targets, &res, &cfg).map_err(|e| e.to_string())?;
    let num_dh = central_diff(&hidden, 1e-5, |t| {
        losses::cce_fwd(t, &w, &targets, &cfg).unwrap().mean_loss()
    });
    let num_dw = central_diff(&w, 1e-5, |t| {
        losses::cce_fwd(&hidden, t, &targets, &cfg)
            .unwrap()
            .mean_loss()
    });
    ensure(
        max_rel_err(dh.data(), num_dh.data()) < 1e-5,
        "cce dhidden vs finite differences".into(),
    )?;
    ensure(
        max_rel_err(dw.data(), num_dw.data()) < 1e-5,
        "cce dweight vs finite differences".into(),
    )
}

fn select_chunk_size_suite() -> Result<(), String> {
    let budget = 192 * 1024;
    ensure(
        losses::select_chunk_size(32_000, budget, 1) == 4096,
        "tier for V=32000".into(),
    )?;
    ensure(
        losses::select_chunk_size(151_936, budget, 1) == 16_384,
        "tier for V=151936".into(),
    )?;
    ensure(
        losses::select_chunk_size(100, budget, 1) == 100,
        "cap at V".into(),
    )
}

// ------------------------------------------------------------------- optim

fn clip_coefficient_suite() -> Result<(), String> {
    let a = Tensor::new(vec![2], vec![3.0, 0.0]).unwrap();
    let b = Tensor::new(vec![2], vec![0.0, 4.0]).unwrap();
    close(
        optim::clip_coefficient([&a, &b], 1.0),
        1.0 / (5.0 + 1e-6),
        1e-12,
        "3-4-5 clip",
    )?;
    let small = Tensor::new(vec![1], vec![0.5]).unwrap();
    close(
        optim::clip_coefficient([&small], 1.0),
        1.0,
        0.0,
        "no clip below max",
    )
}

fn adamw_step_suite() -> Result<(), String> {
    // Fused step vs a literal six-pass reference, 20 random steps.
    let mut r = rng(20);
    let n = 32;
    let hyper = AdamWHyper {
        lr: 3e-3,
        ..Default::default()
    };
    let mut p_fused = Tensor::randn(&[n], 1.0, &mut r);
    let mut p_ref = p_fused.clone();
    let mut s_fused = AdamWState::new(&[n], hyper);
    let mut s_ref = AdamWState::new(&[n], hyper);
    for step in 0..20 {
        let g = Tensor::randn(&[n], 1.0, &mut r);
        let coef = if step % 3 == 0 { 0.5 } else { 1.0 };
        optim::adamw_step(&mut p_fused, &g, &mut s_fused, coef, 1.0).map_err(|e| e.to_string())?;
        // Reference: separate passes.
        {
            let h = s_ref.hyper;
            let clipped = g.map(|gv| gv * coef);
            for p in p_ref.data_mut() {
                *p *= 1.0 - h.lr * h.weight_decay;
            }
            for (m, &gv) in s_ref.m.data_mut().iter_mut().zip(clipped.iter()) {
                *m = h.beta1 * *m + (1.0 - h.beta1) * gv;
            }
            for (v, &gv) in s_ref.v.data_mut().iter_mut().zip(clipped.iter()) {
                *v = h.beta2 * *v + (1.0 - h.beta2) * gv * gv;
            }
            s_ref.step += 1;
            let bc1 = 1.0 - h.beta1.powi(s_ref.step as i32);
            let bc2 = 1.0 - h.beta2.powi(s_ref.step as i32);
            for i in 0..p_ref.len() {
                let m_hat = s_ref.m.data()[i] / bc1;
                let v_hat = s_ref.v.data()[i] / bc2;
                p_ref.data_mut()[i] -= h.lr * (m_hat / (v_hat.sqrt() + h.eps));
            }
        }
        let diff = max_abs_diff(p_fused.data(), p_ref.data());
        ensure(
            diff <= 1e-14,
            format!("step {step}: fused vs unfused {diff}"),
        )?;
    }
    Ok(())
}

fn quantize_state_suite() -> Result<(), String> {
    let t = Tensor::new(vec![2], vec![0.5, -0.25]).unwrap();
    let q = optim::quantize_state(&t, 2048).map_err(|e| e.to_string())?;
    ensure(q.codes == vec![127, -64], format!("codes {:?}", q.codes))?;
    ensure(q.scales == vec![0.5], format!("scales {:?}", q.scales))
}

fn dequantize_state_suite() -> Result<(), String> {
    let mut r = rng(21);
    let t = Tensor::uniform(&[5000], -0.1, 0.1, &mut r);
    let q = optim::quantize_state(&t, 2048).map_err(|e| e.to_string())?;
    let back = optim::dequantize_state(&q);
    for (i, (&a, &b)) in t.iter().zip(back.iter()).enumerate() {
        let bound = q.scales[i / 2048] / 127.0;
        ensure(
            (a - b).abs() <= bound * (1.0 + 1e-12),
            format!("round-trip error above scale/127 at {i}"),
        )?;
    }
    Ok(())
}

fn schedulefree_step_suite() -> Result<(), String> {
    let theta = Tensor::filled(&[2], 3.0);
    let z = Tensor::filled(&[2], 1.0);
    let g = Tensor::filled(&[2], 10.0);
    let (t2, z2) =
        optim::schedulefree_step(&theta, &z, &g, 0.1, 1.0, 5).map_err(|e| e.to_string())?;
    ensure(
        t2.data() == theta.data() && z2.data() == z.data(),
        "beta=1 must freeze".into(),
    )?;
    let (t0, z0) =
        optim::schedulefree_step(&theta, &z, &g, 0.1, 0.0, 1).map_err(|e| e.to_string())?;
    ensure(
        t0.data() == z0.data() && (t0.data()[0] - 2.0).abs() < 1e-12,
        "beta=0 must be plain SGD".into(),
    )
}

fn newton_schulz_suite() -> Result<(), String> {
    // Diagonal with singular values in [0.5, 1.5] rotated by nothing:
    // well-conditioned by construction.
    let mut r = rng(22);
    let n = 8;
    let mut g = Tensor::zeros(&[n, n]);
    for i in 0..n {
        g.set(i, i, r.gen_range(0.5..1.5));
    }
    let x = optim::newton_schulz(&g, 10).map_err(|e| e.to_string())?;
    let gram = x.matmul_transa(&x).unwrap();
    let mut sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t = if i == j { 1.0 } else { 0.0 };
            sq += (gram.at(i, j) - t) * (gram.at(i, j) - t);
        }
    }
    ensure(
        sq.sqrt() <= 1e-3,
        format!("orthogonality residual {}", sq.sqrt()),
    )
}

fn muon_step_suite() -> Result<(), String> {
    let mut r = rng(23);
    let g = Tensor::randn(&[6, 4], 1.0, &mut r);
    let scaled = g.map(|v| 11.0 * v);
    let mut t1 = Tensor::zeros(&[6, 4]);
    let mut t2 = Tensor::zeros(&[6, 4]);
    optim::muon_step(&mut t1, &g, 0.1, 10).map_err(|e| e.to_string())?;
    optim::muon_step(&mut t2, &scaled, 0.1, 10).map_err(|e| e.to_string())?;
    ensure(
        max_abs_diff(t1.data(), t2.data()) < 1e-8,
        "update must ignore gradient scale".into(),
    )?;
    let zero = Tensor::zeros(&[6, 4]);
    let mut frozen = Tensor::filled(&[6, 4], 1.0);
    optim::muon_step(&mut frozen, &zero, 0.1, 5).map_err(|e| e.to_string())?;
    ensure(
        frozen.iter().all(|&v| v == 1.0),
        "near-zero gradient must be a no-op".into(),
    )
}

fn adam_atan2_step_suite() -> Result<(), String> {
    let mut theta = Tensor::zeros(&[1]);
    let m = Tensor::filled(&[1], 3.0);
    let v = Tensor::zeros(&[1]);
    optim::adam_atan2_step(&mut theta, &m, &v, 1.0).map_err(|e| e.to_string())?;
    close(
        theta.data()[0],
        -std::f64::consts::FRAC_PI_2,
        1e-15,
        "v=0 saturates at pi/2",
    )
}

fn build_lora_plus_groups_suite() -> Result<(), String> {
    let names: Vec<String> = [
        "layers.0.q.lora_A.weight",
        "layers.0.q.lora_B.weight",
        "embed_tokens.weight",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let groups = optim::build_lora_plus_groups(&names, 1e-4, 16.0, 0.01);
    close(groups[0].lr, 1e-4, 0.0, "lora_A lr")?;
    close(groups[1].lr, 1.6e-3, 1e-18, "lora_B lr")?;
    close(groups[1].weight_decay, 0.16, 1e-15, "lora_B wd")?;
    ensure(groups[2].members == vec![2], "other group routing".into())
}

// ---------------------------------------------------------------- adapters

fn lora_fwd_suite() -> Result<(), String> {
    let mut r = rng(24);
    let x = Tensor::randn(&[3, 5], 1.0, &mut r);
    let w0 = Tensor::randn(&[4, 5], 0.5, &mut r);
    let mut adapter = LoraAdapter::init(4, 5, 2, 4.0, &mut r).map_err(|e| e.to_string())?;
    let y = lora_fwd(&x, &w0, &adapter).map_err(|e| e.to_string())?;
    let base = x.matmul_transb(&w0).unwrap();
    ensure(
        y.data() == base.data(),
        "B=0 must equal base exactly".into(),
    )?;
    adapter.b = Tensor::randn(&[4, 2], 0.3, &mut r);
    let a = lora_fwd(&x, &w0, &adapter).map_err(|e| e.to_string())?;
    let b = lora_fwd_fused(&x, &w0, &adapter).map_err(|e| e.to_string())?;
    ensure(
        max_abs_diff(a.data(), b.data()) <= 1e-12,
        "fused vs unfused paths".into(),
    )
}

fn lora_bwd_suite() -> Result<(), String> {
    let mut r = rng(25);
    let x = Tensor::randn(&[3, 5], 1.0, &mut r);
    let w0 = Tensor::randn(&[4, 5], 0.5, &mut r);
    let adapter = LoraAdapter::init(4, 5, 2, 4.0, &mut r).map_err(|e| e.to_string())?;
    let dy = Tensor::randn(&[3, 4], 1.0, &mut r);
    let (_, da, db) = lora_bwd(&dy, &x, &w0, &adapter).map_err(|e| e.to_string())?;
    ensure(
        da.iter().all(|&v| v == 0.0),
        "dA must be exactly 0 at B=0".into(),
    )?;
    ensure(db.frobenius_norm() > 0.0, "dB must be nonzero".into())
}

fn dora_fwd_suite() -> Result<(), String> {
    let mut r = rng(26);
    let x = Tensor::randn(&[3, 5], 1.0, &mut r);
    let w0 = Tensor::randn(&[4, 5], 0.7, &mut r);
    let mut adapter = DoraAdapter::init(&w0, 2, 4.0, &mut r).map_err(|e| e.to_string())?;
    let y = dora_fwd(&x, &w0, &adapter).map_err(|e| e.to_string())?;
    let base = x.matmul_transb(&w0).unwrap();
    ensure(
        max_abs_diff(y.data(), base.data()) <= 1e-12,
        "init identity".into(),
    )?;
    adapter.lora.b = Tensor::randn(&[4, 2], 0.5, &mut r);
    let w = crate::adapters::dora_weight(&w0, &adapter).map_err(|e| e.to_string())?;
    for (n, m) in column_norms(&w).iter().zip(adapter.magnitude.iter()) {
        close(*n, *m, 1e-12, "effective column norms equal magnitude")?;
    }
    Ok(())
}

// ----------------------------------------------------------------- packing

fn pack_bfd_suite() -> Result<(), String> {
    let packed = packing::pack_bfd(&[3, 3, 2, 2], 5).map_err(|e| e.to_string())?;
    ensure(
        packed.bins.len() == 2,
        format!("{} bins for [3,3,2,2]/5", packed.bins.len()),
    )?;
    let mut r = rng(27);
    for case in 0..200 {
        let n = r.gen_range(1..=10);
        let c = r.gen_range(2..=20);
        let lengths: Vec<usize> = (0..n).map(|_| r.gen_range(1..=c)).collect();
        let bfd = packing::pack_bfd(&lengths, c)
            .map_err(|e| e.to_string())?
            .bins
            .len();
        let opt = packing::optimal_bins(&lengths, c);
        ensure(
            bfd as f64 <= (11.0 / 9.0) * opt as f64 + 6.0 / 9.0,
            format!("case {case}: bfd {bfd} vs opt {opt}"),
        )?;
    }
    Ok(())
}

fn cu_seqlens_suite() -> Result<(), String> {
    ensure(
        packing::cu_seqlens(&[3, 2, 4]) == vec![0, 3, 5, 9],
        "prefix sums".into(),
    )?;
    ensure(packing::cu_seqlens(&[]) == vec![0], "empty case".into())
}

fn position_ids_suite() -> Result<(), String> {
    ensure(
        packing::position_ids(&[3, 2]) == vec![0, 1, 2, 0, 1],
        "position reset".into(),
    )
}

fn token_batches_suite() -> Result<(), String> {
    let b = packing::token_batches(&[600, 600], 1024).map_err(|e| e.to_string())?;
    ensure(b.len() == 2, "two 600s at budget 1024".into())?;
    let b = packing::token_batches(&[100; 10], 1024).map_err(|e| e.to_string())?;
    ensure(
        b.len() == 1 && b[0].ids.len() == 10,
        "ten 100s in one batch".into(),
    )
}

fn waste_stats_suite() -> Result<(), String> {
    let lengths = vec![512usize; 40];
    let report = packing::waste_stats(&lengths, 2048).map_err(|e| e.to_string())?;
    close(report.pad_to_max_waste, 0.75, 1e-12, "pad-to-max waste")
}

// --------------------------------------------------------------------- fp8

fn fp8_encode_suite() -> Result<(), String> {
    for fmt in [Fp8Format::E4M3, Fp8Format::E5M2] {
        for code in 0u16..=255 {
            let code = code as u8;
            if fmt.is_special(code) {
                continue;
            }
            let value = fp8::fp8_decode(code, fmt);
            let back = fp8::fp8_encode(value, fmt).map_err(|e| e.to_string())?;
            ensure(
                back == code,
                format!("{fmt:?} code {code:#04x} round trip -> {back:#04x}"),
            )?;
        }
    }
    let clamped = fp8::fp8_decode(
        fp8::fp8_encode(500.0, Fp8Format::E4M3).unwrap(),
        Fp8Format::E4M3,
    );
    close(clamped, 448.0, 0.0, "saturating clamp")
}

fn fp8_decode_suite() -> Result<(), String> {
    close(Fp8Format::E4M3.max_finite(), 448.0, 0.0, "E4M3 max")?;
    close(Fp8Format::E5M2.max_finite(), 57344.0, 0.0, "E5M2 max")?;
    close(
        Fp8Format::E4M3.min_subnormal(),
        2f64.powi(-9),
        0.0,
        "E4M3 subnormal",
    )?;
    close(
        Fp8Format::E5M2.min_subnormal(),
        2f64.powi(-16),
        0.0,
        "E5M2 subnormal",
    )
}

fn quantize_block_suite() -> Result<(), String> {
    let mut r = rng(28);
    let values: Vec<f64> = (0..10_000).map(|_| r.gen_range(-0.5..0.5)).collect();
    let q = fp8::quantize_block_e4m3(&values, 128).map_err(|e| e.to_string())?;
    let deq = q.dequantize();
    for (i, (&x, &y)) in values.iter().zip(deq.iter()).enumerate() {
        let scale = q.scales[i / 128];
        let bound = fp8::e4m3_coarse_error_bound(scale * 448.0)
            + 0.5 * scale * Fp8Format::E4M3.ulp_at(x / scale);
        ensure(
            (x - y).abs() <= bound + 1e-15,
            format!("block error bound at {i}"),
        )?;
    }
    Ok(())
}

fn delayed_scale_suite() -> Result<(), String> {
    let mut h = fp8::AmaxHistory::with_capacity(Fp8Format::E4M3, 32);
    for amax in [1.0, 2.0, 4.0] {
        h.push(amax);
    }
    close(h.scale(), 4.0 / 448.0, 1e-18, "window max scale")?;
    let mut h = fp8::AmaxHistory::new(Fp8Format::E4M3);
    fp8::delayed_scale_update(&mut h, &[8.0]).map_err(|e| e.to_string())?;
    for _ in 0..31 {
        let (_, s) = fp8::delayed_scale_update(&mut h, &[0.5]).map_err(|e| e.to_string())?;
        close(s, 8.0 / 448.0, 1e-18, "spike persists in window")?;
    }
    let (_, s) = fp8::delayed_scale_update(&mut h, &[0.5]).map_err(|e| e.to_string())?;
    close(s, 0.5 / 448.0, 1e-18, "spike expires after 32 pushes")
}

fn snr_db_suite() -> Result<(), String> {
    close(fp8::snr_db(Fp8Format::E4M3), 19.82, 1e-12, "E4M3 SNR")?;
    close(fp8::snr_db(Fp8Format::E5M2), 13.80, 1e-12, "E5M2 SNR")
}

fn accum_error_suite() -> Result<(), String> {
    close(
        fp8::accum_error(8, 0.01),
        0.028284271247461905,
        1e-15,
        "sqrt(8)*0.01",
    )
}

// ---------------------------------------------------------------- analysis

fn ridge_point_suite() -> Result<(), String> {
    close(
        analysis::ridge_point(&analysis::HardwareSpec::a100()),
        156.0,
        1e-12,
        "A100 ridge",
    )
}

fn arithmetic_intensity_suite() -> Result<(), String> {
    close(
        analysis::arithmetic_intensity(analysis::OpKind::RmsNorm),
        0.5,
        0.0,
        "rmsnorm AI",
    )?;
    close(
        analysis::arithmetic_intensity(analysis::OpKind::CrossEntropy),
        0.375,
        0.0,
        "cross-entropy AI",
    )?;
    close(
        analysis::arithmetic_intensity(analysis::OpKind::Attention { n: 2048.0, d: 64.0 }),
        2048.0 / 65.0,
        1e-12,
        "attention AI",
    )
}

fn mfu_suite() -> Result<(), String> {
    close(analysis::mfu(5e8, 41184.0, 312e12), 39.6, 1e-9, "MFU 39.6")?;
    close(
        analysis::mfu(5e8, 11736.0, 312e12),
        11.284615384615385,
        1e-9,
        "MFU 11.3",
    )
}

fn memory_budget_suite() -> Result<(), String> {
    let input = analysis::MemoryBudgetInput {
        params: 494e6,
        precision: analysis::ParamPrecision::Bf16,
        batch: 8.0,
        seq_len: 2048.0,
        layers: 24.0,
        hidden: 896.0,
        vocab: 151_936.0,
        chunk_size: 4096.0,
        gradient_checkpointing: false,
        eight_bit_optimizer: false,
        cce: false,
    };
    let b = analysis::memory_budget(&input);
    close(b.params_bytes / 1e9, 0.988, 1e-9, "params GB")?;
    close(b.optimizer_bytes / 1e9, 3.952, 1e-9, "optimizer GB")
}

fn checkpoint_plan_suite() -> Result<(), String> {
    let plan = analysis::checkpoint_plan(25);
    ensure(plan.k_star == 5.0 && plan.k_int == 5, "k* for L=25".into())?;
    close(plan.compute_overhead, 1.2, 1e-15, "overhead at k=5")
}

fn cce_reduction_suite() -> Result<(), String> {
    close(
        analysis::cce_reduction(151_936, 4096),
        37.09375,
        1e-12,
        "V/C",
    )
}

fn flash_io_suite() -> Result<(), String> {
    let io = analysis::flash_io(2048.0, 64.0, 192.0 * 1024.0 / 4.0);
    ensure(io.stream_term == 2048.0 * 64.0, "stream term".into())?;
    ensure(
        io.total == io.stream_term + io.tiled_term,
        "both terms reported".into(),
    )?;
    let sp = analysis::flash_speedup(192.0 * 1024.0, 128.0);
    close(sp.sram_as_bytes, 1536.0, 1e-12, "speedup (bytes reading)")?;
    close(sp.sram_as_elems, 384.0, 1e-12, "speedup (element reading)")
}

fn kv_ratio_suite() -> Result<(), String> {
    close(
        analysis::kv_ratio(analysis::AttentionVariant::Mqa, 32),
        1.0 / 32.0,
        0.0,
        "MQA ratio",
    )
}

// ----------------------------------------------------------------- trainer

fn toy_model(adapter: AdapterMode) -> Result<Model, String> {
    Model::new(
        ModelConfig {
            layers: 1,
            hidden: 8,
            heads: 2,
            ffn_dim: 12,
            vocab: 23,
            max_seq: 8,
            lora_rank: 2,
            adapter,
            ..Default::default()
        },
        3,
    )
    .map_err(|e| e.to_string())
}

fn forward_loss_suite() -> Result<(), String> {
    let model = toy_model(AdapterMode::Full)?;
    let seq1: Vec<u32> = vec![1, 4, 9, 16, 2];
    let seq2: Vec<u32> = vec![3, 5, 7];
    let mut packed_tokens = seq1.clone();
    packed_tokens.extend(&seq2);
    let packed = Batch {
        tokens: packed_tokens,
        cu_seqlens: vec![0, seq1.len(), seq1.len() + seq2.len()],
    };
    let (packed_loss, _) = forward_loss(&model, &packed).map_err(|e| e.to_string())?;
    let (l1, c1) = forward_loss(&model, &Batch::single(seq1)).map_err(|e| e.to_string())?;
    let (l2, c2) = forward_loss(&model, &Batch::single(seq2)).map_err(|e| e.to_string())?;
    let n1 = c1.cce.n_valid as f64;
    let n2 = c2.cce.n_valid as f64;
    close(
        packed_loss,
        (l1 * n1 + l2 * n2) / (n1 + n2),
        1e-10,
        "packed vs unpacked loss",
    )
}

fn backward_suite() -> Result<(), String> {
    let model = toy_model(AdapterMode::Full)?;
    let batch = Batch::single(vec![1, 7, 3, 22]);
    let (_, caches) = forward_loss(&model, &batch).map_err(|e| e.to_string())?;
    let grads = backward(&model, &batch, &caches).map_err(|e| e.to_string())?;
    // Spot-check two parameter tensors against finite differences.
    for name in ["lm_head.weight", "layers.0.attn.q.weight"] {
        let id = model
            .params()
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| format!("missing param {name}"))?;
        let analytic = grads
            .get(id)
            .cloned()
            .ok_or_else(|| format!("no grad for {name}"))?;
        let mut probe = toy_model(AdapterMode::Full)?;
        let numeric = central_diff(&model.params()[id].value, 1e-5, |t| {
            probe.params_mut()[id].value = t.clone();
            forward_loss(&probe, &batch).unwrap().0
        });
        let err = max_rel_err(analytic.data(), numeric.data());
        ensure(err <= 1e-4, format!("{name}: rel err {err}"))?;
    }
    Ok(())
}

fn train_suite() -> Result<(), String> {
    let mut model = Model::new(ModelConfig::default(), 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        steps: 80,
        optimizer: OptimizerChoice::AdamW,
        ..Default::default()
    };
    let out = trainer::train(&mut model, &cfg).map_err(|e| e.to_string())?;
    ensure(
        out.final_loss < 0.8 * out.initial_loss,
        format!(
            "loss {} -> {} did not decrease",
            out.initial_loss, out.final_loss
        ),
    )?;
    ensure(out.final_report.pass, "final verification failed".into())
}

fn verify_suite() -> Result<(), String> {
    let model = toy_model(AdapterMode::Full)?;
    let batch = Batch::single(vec![1, 5, 9, 2]);
    let report = trainer::verify(&model, &batch).map_err(|e| e.to_string())?;
    ensure(
        report.pass,
        format!("healthy model failed: {:?}", report.failures),
    )?;
    let mut frozen = toy_model(AdapterMode::Full)?;
    frozen.set_all_trainable(false);
    let report = trainer::verify(&frozen, &batch).map_err(|e| e.to_string())?;
    ensure(
        report
            .failures
            .iter()
            .any(|f| f.contains("trainable fraction")),
        "frozen model must fail trainable fraction".into(),
    )?;
    let batch_one = Batch {
        tokens: vec![1, 2],
        cu_seqlens: vec![0, 1, 2],
    };
    let report = trainer::verify(&model, &batch_one).map_err(|e| e.to_string())?;
    ensure(
        report.failures.iter().any(|f| f.contains("gradient norm")),
        "all-ignored batch must fail gradient norm".into(),
    )
}

// --------------------------------------------------------------------- cli

fn cmd_pack_smoke() -> Result<(), String> {
    let ids: Vec<String> = (0..4).map(|i| format!("seq{i}")).collect();
    let manifest = packing::build_manifest(&ids, &[3, 3, 2, 2], 5).map_err(|e| e.to_string())?;
    ensure(manifest.stats.num_bins == 2, "manifest bin count".into())
}

fn cmd_train_smoke() -> Result<(), String> {
    let mut model = Model::new(
        ModelConfig {
            layers: 1,
            hidden: 8,
            heads: 2,
            ffn_dim: 12,
            vocab: 23,
            max_seq: 8,
            ..Default::default()
        },
        1,
    )
    .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        steps: 3,
        seq_len: 8,
        batch_sequences: 2,
        ..Default::default()
    };
    let out = trainer::train(&mut model, &cfg).map_err(|e| e.to_string())?;
    ensure(out.metrics.len() == 3, "metrics per step".into())
}

fn cmd_analyze_smoke() -> Result<(), String> {
    let report = super::analyze_report();
    ensure(
        report.table.iter().any(|line| line.contains("ridge=156")),
        "analyze table must contain ridge=156".into(),
    )?;
    ensure(
        report
            .table
            .iter()
            .any(|line| line.contains("MFU(41184)=39.6%")),
        "analyze table must contain MFU(41184)=39.6%".into(),
    )
}

fn cmd_verify_registry() -> Result<(), String> {
    // Every operation named in the build contract must have a suite.
    let names: Vec<&str> = registry().iter().map(|s| s.name).collect();
    for op in SPEC_OPERATIONS {
        ensure(
            names.iter().any(|n| n.ends_with(op) || n.contains(op)),
            format!("no suite covers operation {op}"),
        )?;
    }
    Ok(())
}

/// Every public operation the library contracts to provide; the registry
/// coverage check walks this list.
pub const SPEC_OPERATIONS: &[&str] = &[
    "online_update",
    "logsumexp",
    "stable_softmax",
    "kahan_add",
    "rmsnorm_fwd",
    "rmsnorm_bwd",
    "rmsnorm_residual_fwd",
    "swiglu_fwd",
    "swiglu_bwd",
    "rope_build_cache",
    "rope_apply_qk",
    "dropout_fwd",
    "attention_naive",
    "attention_tiled",
    "ce_naive",
    "cce_fwd",
    "cce_bwd",
    "select_chunk_size",
    "clip_coefficient",
    "adamw_step",
    "quantize_state",
    "dequantize_state",
    "schedulefree_step",
    "newton_schulz",
    "muon_step",
    "adam_atan2_step",
    "build_lora_plus_groups",
    "lora_fwd",
    "lora_bwd",
    "dora_fwd",
    "pack_bfd",
    "cu_seqlens",
    "position_ids",
    "token_batches",
    "waste_stats",
    "fp8_encode",
    "fp8_decode",
    "quantize_block_e4m3",
    "delayed_scale_update",
    "snr_db",
    "accum_error",
    "ridge_point",
    "arithmetic_intensity",
    "mfu",
    "memory_budget",
    "checkpoint_plan",
    "cce_reduction",
    "flash_io",
    "kv_ratio",
    "forward_loss",
    "backward",
    "train",
    "verify",
    "cmd_verify",
    "cmd_pack",
    "cmd_train",
    "cmd_analyze",
];

pub fn registry() -> Vec<Suite> {
    vec![
        Suite {
            name: "numerics::online_update",
            run: online_update,
        },
        Suite {
            name: "numerics::logsumexp",
            run: logsumexp_suite,
        },
        Suite {
            name: "numerics::stable_softmax",
            run: stable_softmax_suite,
        },
        Suite {
            name: "numerics::kahan_add",
            run: kahan_add,
        },
        Suite {
            name: "layers::rmsnorm_fwd",
            run: rmsnorm_fwd_suite,
        },
        Suite {
            name: "layers::rmsnorm_bwd",
            run: rmsnorm_bwd_suite,
        },
        Suite {
            name: "layers::rmsnorm_residual_fwd",
            run: rmsnorm_residual_suite,
        },
        Suite {
            name: "layers::swiglu_fwd",
            run: swiglu_fwd_suite,
        },
        Suite {
            name: "layers::swiglu_bwd",
            run: swiglu_bwd_suite,
        },
        Suite {
            name: "layers::rope_build_cache",
            run: rope_build_cache_suite,
        },
        Suite {
            name: "layers::rope_apply_qk",
            run: rope_apply_suite,
        },
        Suite {
            name: "layers::dropout_fwd",
            run: dropout_suite,
        },
        Suite {
            name: "layers::attention_naive",
            run: attention_naive_suite,
        },
        Suite {
            name: "layers::attention_tiled",
            run: attention_tiled_suite,
        },
        Suite {
            name: "losses::ce_naive",
            run: ce_naive_suite,
        },
        Suite {
            name: "losses::cce_fwd",
            run: cce_fwd_suite,
        },
        Suite {
            name: "losses::cce_bwd",
            run: cce_bwd_suite,
        },
        Suite {
            name: "losses::select_chunk_size",
            run: select_chunk_size_suite,
        },
        Suite {
            name: "optim::clip_coefficient",
            run: clip_coefficient_suite,
        },
        Suite {
            name: "optim::adamw_step",
            run: adamw_step_suite,
        },
        Suite {
            name: "optim::quantize_state",
            run: quantize_state_suite,
        },
        Suite {
            name: "optim::dequantize_state",
            run: dequantize_state_suite,
        },
        Suite {
            name: "optim::schedulefree_step",
            run: schedulefree_step_suite,
        },
        Suite {
            name: "optim::newton_schulz",
            run: newton_schulz_suite,
        },
        Suite {
            name: "optim::muon_step",
            run: muon_step_suite,
        },
        Suite {
            name: "optim::adam_atan2_step",
            run: adam_atan2_step_suite,
        },
        Suite {
            name: "optim::build_lora_plus_groups",
            run: build_lora_plus_groups_suite,
        },
        Suite {
            name: "adapters::lora_fwd",
            run: lora_fwd_suite,
        },
        Suite {
            name: "adapters::lora_bwd",
            run: lora_bwd_suite,
        },
        Suite {
            name: "adapters::dora_fwd",
            run: dora_fwd_suite,
        },
        Suite {
            name: "packing::pack_bfd",
            run: pack_bfd_suite,
        },
        Suite {
            name: "packing::cu_seqlens",
            run: cu_seqlens_suite,
        },
        Suite {
            name: "packing::position_ids",
            run: position_ids_suite,
        },
        Suite {
            name: "packing::token_batches",
            run: token_batches_suite,
        },
        Suite {
            name: "packing::waste_stats",
            run: waste_stats_suite,
        },
        Suite {
            name: "fp8::fp8_encode",
            run: fp8_encode_suite,
        },
        Suite {
            name: "fp8::fp8_decode",
            run: fp8_decode_suite,
        },
        Suite {
            name: "fp8::quantize_block_e4m3",
            run: quantize_block_suite,
        },
        Suite {
            name: "fp8::delayed_scale_update",
            run: delayed_scale_suite,
        },
        Suite {
            name: "fp8::snr_db",
            run: snr_db_suite,
        },
        Suite {
            name: "fp8::accum_error",
            run: accum_error_suite,
        },
        Suite {
            name: "analysis::ridge_point",
            run: ridge_point_suite,
        },
        Suite {
            name: "analysis::arithmetic_intensity",
            run: arithmetic_intensity_suite,
        },
        Suite {
            name: "analysis::mfu",
            run: mfu_suite,
        },
        Suite {
            name: "analysis::memory_budget",
            run: memory_budget_suite,
        },
        Suite {
            name: "analysis::checkpoint_plan",
            run: checkpoint_plan_suite,
        },
        Suite {
            name: "analysis::cce_reduction",
            run: cce_reduction_suite,
        },
        Suite {
            name: "analysis::flash_io",
            run: flash_io_suite,
        },
        Suite {
            name: "analysis::kv_ratio",
            run: kv_ratio_suite,
        },
        Suite {
            name: "trainer::forward_loss",
            run: forward_loss_suite,
        },
        Suite {
            name: "trainer::backward",
            run: backward_suite,
        },
        Suite {
            name: "trainer::train",
            run: train_suite,
        },
        Suite {
            name: "trainer::verify",
            run: verify_suite,
        },
        Suite {
            name: "cli::cmd_verify",
            run: cmd_verify_registry,
        },
        Suite {
            name: "cli::cmd_pack",
            run: cmd_pack_smoke,
        },
        Suite {
            name: "cli::cmd_train",
            run: cmd_train_smoke,
        },
        Suite {
            name: "cli::cmd_analyze",
            run: cmd_analyze_smoke,
        },
    ]
}
