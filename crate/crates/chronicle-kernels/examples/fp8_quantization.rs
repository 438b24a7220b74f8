//! Software FP8: the E4M3/E5M2 grids, block-wise quantization error, and
//! delayed scaling with an amax window.
//!
//! ```bash
//! cargo run --example fp8_quantization
//! ```

use chronicle_kernels::fp8::{
    accum_error, delayed_scale_update, e4m3_coarse_error_bound, fp8_decode, fp8_encode,
    quantize_block_e4m3, snr_db, AmaxHistory, Fp8Format,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    for fmt in [Fp8Format::E4M3, Fp8Format::E5M2] {
        println!(
            "{fmt:?}: {} exponent bits, {} mantissa bits, bias {}, max finite {}, min subnormal {:.2e}, SNR {:.2} dB",
            fmt.exponent_bits(),
            fmt.mantissa_bits(),
            fmt.bias(),
            fmt.max_finite(),
            fmt.min_subnormal(),
            snr_db(fmt)
        );
    }

    println!("\nencode/decode round trips (saturating at max finite):");
    for x in [1.0, 0.3, 448.0, 500.0, 1e-3, 60000.0] {
        let e4 = fp8_decode(fp8_encode(x, Fp8Format::E4M3).unwrap(), Fp8Format::E4M3);
        let e5 = fp8_decode(fp8_encode(x, Fp8Format::E5M2).unwrap(), Fp8Format::E5M2);
        println!("  {x:>9} -> E4M3 {e4:>9}   E5M2 {e5:>9}");
    }

    // Block-wise quantization: one scale per 128 values.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let weights: Vec<f64> = (0..4096).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let q = quantize_block_e4m3(&weights, 128).unwrap();
    let deq = q.dequantize();
    let worst = weights
        .iter()
        .zip(deq.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!(
        "\nblock-wise E4M3 over {} weights (amax ~ 0.5): worst error {worst:.2e}",
        weights.len()
    );
    println!(
        "  coarse bound amax/3584 = {:.2e} plus the rounding quantum at each value",
        e4m3_coarse_error_bound(0.5)
    );

    // Delayed scaling: the window maximum sets the scale, so one spike
    // holds the scale up for exactly 32 steps and nothing ever clips.
    let mut history = AmaxHistory::new(Fp8Format::E4M3);
    println!("\ndelayed scaling, window 32, stream = spike 8.0 then calm 0.5:");
    let (_, s) = delayed_scale_update(&mut history, &[8.0]).unwrap();
    println!("  push amax 8.0 -> scale {s:.5}");
    let mut last = s;
    let mut held = 0;
    for _ in 0..40 {
        let (_, s) = delayed_scale_update(&mut history, &[0.5]).unwrap();
        if (s - last).abs() > 1e-15 {
            println!(
                "  scale drops to {s:.5} after the spike leaves the window ({held} calm pushes)"
            );
            last = s;
        } else {
            held += 1;
        }
    }

    println!(
        "\ngradient accumulation error model: sqrt(n)*eps, n=8 eps=0.01 -> {:.4}",
        accum_error(8, 0.01)
    );
}
