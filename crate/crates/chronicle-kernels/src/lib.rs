//! chronicle-kernels: CPU reference implementations of the numerical
//! primitives behind efficient transformer fine-tuning.
//!
//! Every kernel here is the *semantic* version of a fused GPU kernel:
//! identical math, identical operation order where it matters, validated
//! against brute-force oracles, closed-form identities, and central
//! finite differences instead of profilers.
//!
//! Modules:
//! - [`numerics`] — online softmax / streaming log-sum-exp, Kahan summation
//! - [`layers`] — RMSNorm, SwiGLU, RoPE, seeded dropout, tiled attention
//! - [`losses`] — chunked (fused-linear) cross-entropy with full-logit oracle
//! - [`optim`] — AdamW with fused-step semantics, 8-bit states, Schedule-Free,
//!   Muon/Newton-Schulz, Adam-atan2, LoRA+ parameter groups
//! - [`adapters`] — LoRA (incl. fused identity) and DoRA
//! - [`packing`] — best-fit-decreasing sequence packing, cu_seqlens,
//!   position ids, token batching
//! - [`fp8`] — software E4M3/E5M2 codecs, block-wise quantization, delayed
//!   scaling
//! - [`analysis`] — roofline/MFU/memory-budget calculators
//! - [`trainer`] — toy decoder-only transformer wiring everything into a
//!   full train step with hand-written reverse mode
//! - [`cli`] — verify/pack/train/analyze/bench entry points
//!
//! Run the self-check suite with `chronicle-kernels verify`, or start from
//! the `examples/` directory — there is one runnable example per capability.

// Indexed loops over multiple parallel buffers are the clearest form for
// these kernels.
#![allow(clippy::needless_range_loop)]

pub mod adapters;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod fp8;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod numerics;
pub mod optim;
pub mod packing;
pub mod tensor;
pub mod testing;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Precision, Tensor};
