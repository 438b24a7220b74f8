//! The optimizer zoo: fused-order AdamW, 8-bit moments, Schedule-Free,
//! Newton-Schulz orthogonalization, and the atan2-bounded update.
//!
//! ```bash
//! cargo run --example optimizers
//! ```

use chronicle_kernels::optim::{
    adamw_step, clip_coefficient, dequantize_state, newton_schulz, quantize_state, AdamWHyper,
    AdamWState, ScheduleFreeState,
};
use chronicle_kernels::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);

    // Global-norm clipping: one coefficient for every tensor, no mutation.
    let g1 = Tensor::new(vec![2], vec![3.0, 0.0]).unwrap();
    let g2 = Tensor::new(vec![2], vec![0.0, 4.0]).unwrap();
    let coef = clip_coefficient([&g1, &g2], 1.0);
    println!("clip: gradients with global norm 5, max 1 -> coefficient {coef:.6}\n");

    // One fused AdamW step, by hand.
    let mut theta = Tensor::filled(&[1], 1.0);
    let grad = Tensor::filled(&[1], 1.0);
    let hyper = AdamWHyper {
        lr: 0.1,
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut state = AdamWState::new(&[1], hyper);
    adamw_step(&mut theta, &grad, &mut state, 1.0, 1.0).unwrap();
    println!(
        "AdamW first step (theta=1, g=1, lr=0.1): theta -> {:.9} (bias-corrected m_hat = v_hat = 1)\n",
        theta.data()[0]
    );

    // 8-bit moments: 4x smaller states, error bounded by scale/127.
    let moments = Tensor::uniform(&[4096], -0.1, 0.1, &mut rng);
    let q = quantize_state(&moments, 2048).unwrap();
    let back = dequantize_state(&q);
    let worst = moments
        .iter()
        .zip(back.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!(
        "8-bit state round trip over {} values: worst error {worst:.2e} (bound scale/127 = {:.2e})\n",
        moments.len(),
        q.scales.iter().cloned().fold(0.0f64, f64::max) / 127.0
    );

    // Newton-Schulz: watch the Gram residual collapse quadratically.
    let mut diag = Tensor::zeros(&[8, 8]);
    for i in 0..8 {
        diag.set(i, i, 0.5 + i as f64 * 0.12);
    }
    println!("Newton-Schulz on a well-conditioned 8x8:");
    for steps in 1..=8 {
        let x = newton_schulz(&diag, steps).unwrap();
        let gram = x.matmul_transa(&x).unwrap();
        let mut sq = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                let t = if i == j { 1.0 } else { 0.0 };
                sq += (gram.at(i, j) - t) * (gram.at(i, j) - t);
            }
        }
        println!(
            "  after {steps} iterations: |X^T X - I|_F = {:.3e}",
            sq.sqrt()
        );
    }
    println!("  the polar factor's norm is sqrt(min(m,n)); the gradient's scale is gone.\n");

    // atan2 replaces m/(sqrt(v)+eps): bounded even at v = 0.
    println!("Adam-atan2 update magnitudes (|update| <= pi/2 always):");
    for (m, v) in [(1.0f64, 100.0f64), (1.0, 0.01), (1.0, 0.0)] {
        let update = m.atan2(v.sqrt());
        println!("  m_hat={m}, v_hat={v:<6}: update = {update:.4}");
    }
    println!();

    // Schedule-free on a quadratic: no learning-rate schedule, still decays.
    let mut theta = Tensor::filled(&[1], 1.0);
    let mut sf = ScheduleFreeState::new(&theta, 0.1, 0.9);
    print!("Schedule-Free on f(x) = x^2, eta=0.1, beta=0.9: |x| =");
    for step in 1..=100 {
        let g = theta.map(|x| 2.0 * x);
        sf.step(&mut theta, &g, 1.0, 1.0).unwrap();
        if step % 20 == 0 {
            print!(" {:.4}", theta.data()[0].abs());
        }
    }
    println!("\n  (averaging supplies the implicit decay a schedule would)");
}
