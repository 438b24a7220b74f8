//! Compensated summation under emulated 32-bit arithmetic: the naive sum
//! silently drops every tiny increment, Kahan keeps them all.
//!
//! ```bash
//! cargo run --example kahan_summation
//! ```

use chronicle_kernels::numerics::{naive_sum, KahanAccumulator};
use chronicle_kernels::tensor::Precision;

fn main() {
    println!("accumulating 1.0 followed by n copies of 1e-8 in f32 arithmetic\n");
    println!(
        "{:>10}  {:>14}  {:>14}  {:>12}  {:>12}",
        "n", "exact", "kahan(f32)", "kahan err", "naive err"
    );
    for n in [1_000usize, 10_000, 100_000, 1_000_000] {
        let exact = 1.0 + n as f64 * 1e-8;

        let mut kahan = KahanAccumulator::new(Precision::F32);
        kahan.add(1.0);
        for _ in 0..n {
            kahan.add(1e-8);
        }

        let naive = naive_sum(
            std::iter::once(1.0).chain(std::iter::repeat_n(1e-8, n)),
            Precision::F32,
        );

        println!(
            "{n:>10}  {exact:>14.8}  {:>14.8}  {:>12.2e}  {:>12.2e}",
            kahan.value(),
            (kahan.value() - exact).abs(),
            (naive - exact).abs(),
        );
    }
    println!();
    println!("naive f32 never leaves 1.0: each 1e-8 falls below half an ulp of the");
    println!("running sum and rounds away. The compensation term catches exactly");
    println!("those lost bits, so the Kahan error stays flat as n grows.");
}
