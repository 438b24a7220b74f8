//! Closed-form performance and memory calculators: roofline arithmetic
//! intensity, MFU, training memory budgets, gradient-checkpoint planning,
//! chunked-CE reduction factors, attention IO estimates, and KV-cache
//! ratios. Pure arithmetic; "GB" in reports means 10⁹ bytes (SRAM sizes
//! stay binary KiB).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardwareSpec {
    pub name: String,
    /// Peak FLOPs/s at the training precision.
    pub peak_flops: f64,
    /// HBM bandwidth in bytes/s.
    pub hbm_bandwidth: f64,
    /// Fast on-chip memory per unit in bytes.
    pub sram_bytes: usize,
}

impl HardwareSpec {
    /// A100-40GB at BF16: 312 TFLOPs, 2 TB/s, 192 KiB SRAM per SM.
    pub fn a100() -> Self {
        Self {
            name: "A100".into(),
            peak_flops: 312e12,
            hbm_bandwidth: 2e12,
            sram_bytes: 192 * 1024,
        }
    }
}

/// Arithmetic intensity at which an operation stops being memory-bound:
/// peak FLOPs over bandwidth.
pub fn ridge_point(hw: &HardwareSpec) -> f64 {
    hw.peak_flops / hw.hbm_bandwidth
}

/// Attainable throughput under the roofline: `min(peak, bandwidth · AI)`.
pub fn roofline_flops(hw: &HardwareSpec, intensity: f64) -> f64 {
    hw.peak_flops.min(hw.hbm_bandwidth * intensity)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum OpKind {
    /// `[M×K]·[K×N]` product; AI `MN/(2(M+N))` in the large-K regime.
    MatMul {
        m: f64,
        n: f64,
    },
    /// Self-attention over sequence length `n`, head dim `d`: AI `n/(d+1)`.
    Attention {
        n: f64,
        d: f64,
    },
    RmsNorm,
    CrossEntropy,
}

/// FLOPs-per-byte of the standard training operations.
pub fn arithmetic_intensity(op: OpKind) -> f64 {
    match op {
        OpKind::MatMul { m, n } => m * n / (2.0 * (m + n)),
        OpKind::Attention { n, d } => n / (d + 1.0),
        OpKind::RmsNorm => 0.5,
        OpKind::CrossEntropy => 0.375,
    }
}

/// Model FLOPs utilization in percent: `6·params·tokens_per_sec / peak`.
pub fn mfu(params: f64, tokens_per_sec: f64, peak_flops: f64) -> f64 {
    6.0 * params * tokens_per_sec / peak_flops * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamPrecision {
    Bf16,
    Fp32,
}

impl ParamPrecision {
    pub fn bytes(self) -> f64 {
        match self {
            ParamPrecision::Bf16 => 2.0,
            ParamPrecision::Fp32 => 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryBudgetInput {
    pub params: f64,
    pub precision: ParamPrecision,
    pub batch: f64,
    pub seq_len: f64,
    pub layers: f64,
    pub hidden: f64,
    pub vocab: f64,
    /// Chunk size used when `cce` is on.
    pub chunk_size: f64,
    pub gradient_checkpointing: bool,
    pub eight_bit_optimizer: bool,
    pub cce: bool,
}

/// Itemized training memory, in bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryBudget {
    pub params_bytes: f64,
    pub grads_bytes: f64,
    pub optimizer_bytes: f64,
    pub activations_bytes: f64,
    pub logits_bytes: f64,
    /// Fixed runtime overhead reported as-is (driver context, allocator).
    pub context_bytes: f64,
    pub total_bytes: f64,
}

pub const CUDA_CONTEXT_BYTES: f64 = 2.5e9;

pub fn memory_budget(input: &MemoryBudgetInput) -> MemoryBudget {
    let params_bytes = input.params * input.precision.bytes();
    let grads_bytes = params_bytes;
    // Two FP32 moments per parameter; 8-bit states cut them 4x.
    let optimizer_bytes = if input.eight_bit_optimizer {
        2.0 * input.params
    } else {
        2.0 * input.params * 4.0
    };
    let act_unit = input.batch * input.seq_len * input.hidden * 4.0;
    let activations_bytes = if input.gradient_checkpointing {
        2.0 * input.layers.sqrt() * act_unit
    } else {
        input.layers * act_unit
    };
    let logits_width = if input.cce {
        input.chunk_size
    } else {
        input.vocab
    };
    let logits_bytes = input.batch * input.seq_len * logits_width * 4.0;
    let total_bytes = params_bytes
        + grads_bytes
        + optimizer_bytes
        + activations_bytes
        + logits_bytes
        + CUDA_CONTEXT_BYTES;
    MemoryBudget {
        params_bytes,
        grads_bytes,
        optimizer_bytes,
        activations_bytes,
        logits_bytes,
        context_bytes: CUDA_CONTEXT_BYTES,
        total_bytes,
    }
}

/// Gradient-checkpoint plan for an `L`-layer stack: checkpoint every `k`
/// layers, memory `L/k + k` activation units, minimized at `k* = √L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointPlan {
    /// Real-valued optimum `√L`.
    pub k_star: f64,
    /// Integer `k` minimizing `L/k + k` by brute force.
    pub k_int: usize,
    /// Activation units (`B·N·d` multiples) at the real optimum: `2√L`.
    pub memory_units: f64,
    /// Activation units at the integer optimum: `L/k + k`.
    pub memory_units_int: f64,
    /// Forward recompute factor `1 + 1/k` at the integer optimum.
    pub compute_overhead: f64,
}

pub fn checkpoint_plan(layers: usize) -> CheckpointPlan {
    let l = layers as f64;
    let k_star = l.sqrt();
    let cost = |k: usize| l / k as f64 + k as f64;
    let k_int = (1..=layers.max(1))
        .min_by(|&a, &b| cost(a).partial_cmp(&cost(b)).unwrap())
        .unwrap_or(1);
    CheckpointPlan {
        k_star,
        k_int,
        memory_units: 2.0 * k_star,
        memory_units_int: cost(k_int),
        compute_overhead: 1.0 + 1.0 / k_int as f64,
    }
}

/// Peak-memory reduction of chunked cross-entropy: `V / C`.
pub fn cce_reduction(vocab: usize, chunk: usize) -> f64 {
    vocab as f64 / chunk as f64
}

/// Tiled-attention IO estimate for sequence length `n`, head dim `d`, and
/// SRAM size `m` (in elements): the `N·d` stream term plus the dominant
/// `N²d²/M` tiling term. Callers see both, not just the asymptotic one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlashIoEstimate {
    pub stream_term: f64,
    pub tiled_term: f64,
    pub total: f64,
}

pub fn flash_io(n: f64, d: f64, sram_elems: f64) -> FlashIoEstimate {
    let stream_term = n * d;
    let tiled_term = n * n * d * d / sram_elems;
    FlashIoEstimate {
        stream_term,
        tiled_term,
        total: stream_term + tiled_term,
    }
}

/// IO-bound speedup ratio `M/d` of tiled over standard attention, reported
/// under both readings of the SRAM size (bytes vs 4-byte elements) since the
/// unit is ambiguous in common usage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlashSpeedup {
    pub sram_as_bytes: f64,
    pub sram_as_elems: f64,
}

pub fn flash_speedup(sram_bytes: f64, head_dim: f64) -> FlashSpeedup {
    FlashSpeedup {
        sram_as_bytes: sram_bytes / head_dim,
        sram_as_elems: sram_bytes / 4.0 / head_dim,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum AttentionVariant {
    Mha,
    Mqa,
    /// Grouped-query with group size `g = H/G` query heads per KV head.
    Gqa {
        group_size: usize,
    },
}

/// KV-cache size relative to multi-head attention with `heads` KV heads.
pub fn kv_ratio(variant: AttentionVariant, heads: usize) -> f64 {
    match variant {
        AttentionVariant::Mha => 1.0,
        AttentionVariant::Mqa => 1.0 / heads as f64,
        AttentionVariant::Gqa { group_size } => 1.0 / group_size as f64,
    }
}
