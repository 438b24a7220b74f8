//! Closed-form performance and memory calculators: the roofline, MFU,
//! training memory budgets, and the gradient-checkpoint plan.
//!
//! ```bash
//! cargo run --example roofline_analysis
//! ```

use chronicle_kernels::analysis::{
    arithmetic_intensity, checkpoint_plan, memory_budget, mfu, ridge_point, roofline_flops,
    HardwareSpec, MemoryBudgetInput, OpKind, ParamPrecision,
};

fn main() {
    let hw = HardwareSpec::a100();
    let ridge = ridge_point(&hw);
    println!(
        "{} roofline: peak {:.0} TFLOPs, {:.0} GB/s -> ridge {ridge:.0} FLOPs/byte\n",
        hw.name,
        hw.peak_flops / 1e12,
        hw.hbm_bandwidth / 1e9
    );

    println!(
        "{:<28} {:>10} {:>16} {:>14}",
        "operation", "AI", "attainable", "verdict"
    );
    for (name, op) in [
        ("rmsnorm", OpKind::RmsNorm),
        ("cross-entropy", OpKind::CrossEntropy),
        (
            "attention N=2048 d=64",
            OpKind::Attention { n: 2048.0, d: 64.0 },
        ),
        (
            "matmul 4096x4096",
            OpKind::MatMul {
                m: 4096.0,
                n: 4096.0,
            },
        ),
    ] {
        let ai = arithmetic_intensity(op);
        let attainable = roofline_flops(&hw, ai);
        let verdict = if ai < ridge {
            "memory-bound"
        } else {
            "compute-bound"
        };
        println!(
            "{name:<28} {ai:>10.3} {:>13.2} TF {verdict:>14}",
            attainable / 1e12
        );
    }

    println!("\nmodel FLOPs utilization (params 500M, A100 BF16):");
    for tok_s in [41184.0, 11736.0, 8000.0] {
        println!(
            "  {tok_s:>8} tok/s -> MFU {:.1}%",
            mfu(5e8, tok_s, hw.peak_flops)
        );
    }

    println!("\ntraining memory (494M params, batch 8, seq 2048, 24 layers, hidden 896):");
    let base = MemoryBudgetInput {
        params: 494e6,
        precision: ParamPrecision::Bf16,
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
    for (label, tweak) in [
        ("baseline", None),
        ("+ gradient checkpointing", Some(0usize)),
        ("+ 8-bit optimizer states", Some(1)),
        ("+ chunked cross-entropy", Some(2)),
    ] {
        let mut input = base.clone();
        match tweak {
            Some(0) => input.gradient_checkpointing = true,
            Some(1) => {
                input.gradient_checkpointing = true;
                input.eight_bit_optimizer = true;
            }
            Some(2) => {
                input.gradient_checkpointing = true;
                input.eight_bit_optimizer = true;
                input.cce = true;
            }
            _ => {}
        }
        let b = memory_budget(&input);
        println!(
            "  {label:<26} params {:.2}  grads {:.2}  optim {:.2}  acts {:.2}  logits {:.2}  total {:.2} GB",
            b.params_bytes / 1e9,
            b.grads_bytes / 1e9,
            b.optimizer_bytes / 1e9,
            b.activations_bytes / 1e9,
            b.logits_bytes / 1e9,
            b.total_bytes / 1e9
        );
    }

    println!("\ngradient-checkpoint plan (memory in B*N*d activation units):");
    for layers in [16usize, 24, 25, 48] {
        let p = checkpoint_plan(layers);
        println!(
            "  L={layers:<3} k*={:.2} (integer {}), memory 2*sqrt(L)={:.2}, recompute overhead {:.2}x",
            p.k_star, p.k_int, p.memory_units, p.compute_overhead
        );
    }
}
