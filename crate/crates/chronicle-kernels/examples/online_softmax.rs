//! Streaming log-sum-exp: one pass, constant state, exact result.
//!
//! ```bash
//! cargo run --example online_softmax
//! ```

use chronicle_kernels::numerics::{logsumexp, stable_softmax, OnlineSoftmaxState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    // Watch the running (max, sum) state absorb elements, rescaling the sum
    // whenever the maximum moves.
    let mut state = OnlineSoftmaxState::new();
    println!("streaming [2.0, 5.0, 3.0, 5.0]:");
    for x in [2.0, 5.0, 3.0, 5.0] {
        state.update(x);
        println!("  after {x:>4}: m = {:>4}, d = {:.6}", state.m, state.d);
    }
    println!("  logsumexp = {:.12}\n", state.logsumexp());

    // Identical to the two-pass max-then-sum computation, any order.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let row: Vec<f64> = (0..100_000).map(|_| rng.gen_range(-30.0..30.0)).collect();
    let streamed = logsumexp(&row).unwrap();
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let two_pass = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    println!("100k random logits:");
    println!("  streamed lse = {streamed:.12}");
    println!("  two-pass lse = {two_pass:.12}");
    println!("  |difference| = {:.3e}\n", (streamed - two_pass).abs());

    // The same trick makes softmax immune to overflow.
    let spiky = [1000.0, 0.0, -1000.0];
    let sm = stable_softmax(&spiky);
    println!("softmax({spiky:?}) = {:?}", sm.probs);
    println!("  (naive exp(1000) would overflow; the shifted form does not)");
}
