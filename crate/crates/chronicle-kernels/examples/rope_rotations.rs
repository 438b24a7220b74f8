//! Rotary position embeddings: frequencies, exact norm preservation, and
//! the relative-position property that makes them work.
//!
//! ```bash
//! cargo run --example rope_rotations
//! ```

use chronicle_kernels::layers::{rope_apply_qk, rope_build_cache};
use chronicle_kernels::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn main() {
    let head_dim = 8;
    let cache = rope_build_cache(128, head_dim, 10000.0).unwrap();
    println!("frequencies for head_dim={head_dim}, base=10000:");
    for i in 0..head_dim / 2 {
        let theta = 10000f64.powf(-2.0 * i as f64 / head_dim as f64);
        println!("  pair {i}: theta = {theta:.6}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = Tensor::randn(&[1, head_dim], 1.0, &mut rng);
    let k = Tensor::randn(&[1, head_dim], 1.0, &mut rng);

    println!("\nrotation is orthogonal — the vector norm never drifts:");
    for pos in [0usize, 1, 17, 99] {
        let (q_rot, _) = rope_apply_qk(&q, &k, &[pos], &cache).unwrap();
        println!(
            "  position {pos:>3}: |q| = {:.12} (original {:.12})",
            q_rot.frobenius_norm(),
            q.frobenius_norm()
        );
    }

    println!("\nattention scores depend only on relative position:");
    for (m, n) in [(3usize, 10usize), (40, 47), (90, 97)] {
        let (qm, _) = rope_apply_qk(&q, &q, &[m], &cache).unwrap();
        let (_, kn) = rope_apply_qk(&k, &k, &[n], &cache).unwrap();
        println!(
            "  dot(rot_{m}(q), rot_{n}(k)) = {:.10}   (gap {})",
            dot(&qm, &kn),
            n - m
        );
    }
    let (_, k7) = rope_apply_qk(&k, &k, &[7], &cache).unwrap();
    println!(
        "  dot(q, rot_7(k))           = {:.10}   (the shared value: every pair above has gap 7)",
        dot(&q, &k7)
    );
}
