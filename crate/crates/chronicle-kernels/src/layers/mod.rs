//! Forward and backward passes for the transformer building blocks:
//! RMSNorm (plus the residual-fused variant), SwiGLU, rotary embeddings,
//! seeded dropout, and scaled-dot-product attention in both a naive
//! score-materializing form (the oracle) and a tiled streaming form.

mod attention;
mod dropout;
mod rmsnorm;
mod rope;
mod swiglu;

pub use attention::{attention_naive, attention_tiled, AttentionConfig, AttentionOutput};
pub use dropout::{dropout_bwd, dropout_fwd};
pub use rmsnorm::{rmsnorm_bwd, rmsnorm_fwd, rmsnorm_residual_fwd, RmsNormCache};
pub use rope::{rope_apply_inverse, rope_apply_qk, rope_build_cache, RopeCache};
pub use swiglu::{swiglu_bwd, swiglu_fwd};
