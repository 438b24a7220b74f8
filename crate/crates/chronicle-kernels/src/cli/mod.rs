//! Command-line front door: `verify`, `pack`, `train`, `analyze`, `bench`.
//!
//! Every command writes deterministic JSON for a fixed config and seed; the
//! only non-reproducible values (wall-clock timestamps, bench timings) live
//! in dedicated fields so outputs can be compared byte-for-byte after
//! masking them. Exit codes: 0 success, 1 verify/test failure, 2 bad
//! config.

mod suites;

pub use suites::{registry, Suite, SPEC_OPERATIONS};

use crate::analysis::{self, HardwareSpec, MemoryBudgetInput, ParamPrecision};
use crate::error::{Error, Result};
use crate::packing;
use crate::tensor::Tensor;
use crate::trainer::{train, Model, ModelConfig, TrainConfig};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_BAD_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "chronicle-kernels",
    about = "CPU reference kernels for transformer fine-tuning, with built-in verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full oracle/property suite over every module.
    Verify(VerifyArgs),
    /// Pack a JSONL dataset of sequence lengths into bins.
    Pack(PackArgs),
    /// Train the toy model on the synthetic copy task.
    Train(TrainArgs),
    /// Reproduce the closed-form performance/memory numbers.
    Analyze(AnalyzeArgs),
    /// Time the reference kernels at a few representative sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    /// JSONL file of {"id", "length"} records (or raw token-id arrays).
    #[arg(long)]
    pub input: PathBuf,
    /// Bin capacity in tokens.
    #[arg(long)]
    pub capacity: usize,
    /// Manifest output path.
    #[arg(long, default_value = "packing_manifest.json")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config file ({"model": {...}, "train": {...}}); flags below
    /// override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "batch_size")]
    pub batch_size: Option<usize>,
    #[arg(long = "seq_len")]
    pub seq_len: Option<usize>,
    #[arg(long = "lora_r")]
    pub lora_r: Option<usize>,
    #[arg(long = "lora_alpha")]
    pub lora_alpha: Option<f64>,
    /// Switch the adapter mode to LoRA+ (B matrices learn lr_ratio faster).
    #[arg(long = "use_loraplus", default_value_t = false)]
    pub use_loraplus: bool,
    #[arg(long = "lr_ratio")]
    pub lr_ratio: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run the verification checks on every step instead of periodically.
    #[arg(long = "verify_gradients", default_value_t = false)]
    pub verify_gradients: bool,
    /// Metrics JSONL path.
    #[arg(long, default_value = "metrics.jsonl")]
    pub output: PathBuf,
    /// Final verification report path (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Hardware preset; only "a100" is bundled.
    #[arg(long, default_value = "a100")]
    pub preset: String,
    /// Write the JSON report here in addition to the stdout table.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// On-disk training config; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_or_print(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, content)?;
        }
        None => println!("{content}"),
    }
    Ok(())
}

// ------------------------------------------------------------------ verify

#[derive(Debug, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub timestamp: u64,
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub suites: Vec<SuiteResult>,
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    if let Ok(value) = std::env::var("CHRONICLE_KERNELS_FAULT") {
        // Mutation hook for the harness: arm a deliberate kernel fault and
        // prove the suite catches it.
        crate::testing::arm_from_env(&value);
    }
    let mut suites = Vec::new();
    let mut failed = 0usize;
    for suite in registry() {
        let outcome = (suite.run)();
        let passed = outcome.is_ok();
        if !passed {
            failed += 1;
            eprintln!("FAIL {} — {}", suite.name, outcome.as_ref().unwrap_err());
        }
        suites.push(SuiteResult {
            name: suite.name.to_string(),
            passed,
            detail: outcome.err(),
        });
    }
    let report = VerifyReport {
        timestamp: unix_timestamp(),
        total: suites.len(),
        passed: suites.len() - failed,
        failed,
        suites,
    };
    let json = serde_json::to_string_pretty(&report)?;
    write_or_print(args.output.as_deref(), &json)?;
    eprintln!("verify: {}/{} suites passed", report.passed, report.total);
    Ok(if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

// -------------------------------------------------------------------- pack

pub fn cmd_pack(args: &PackArgs) -> Result<i32> {
    if args.capacity == 0 {
        return Err(Error::InvalidArgument("pack: capacity must be >= 1".into()));
    }
    let (ids, lengths) = packing::read_lengths_jsonl(&args.input)?;
    let manifest = packing::build_manifest(&ids, &lengths, args.capacity)?;
    packing::write_manifest(&manifest, &args.output)?;
    eprintln!(
        "pack: {} sequences -> {} bins (waste {:.1}%, pad-to-max {:.1}%), manifest at {}",
        manifest.stats.num_sequences,
        manifest.stats.num_bins,
        manifest.stats.packed_waste * 100.0,
        manifest.stats.pad_to_max_waste * 100.0,
        args.output.display()
    );
    Ok(EXIT_OK)
}

// ------------------------------------------------------------------- train

pub fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let mut run: RunConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.steps {
        run.train.steps = v;
    }
    if let Some(v) = args.batch_size {
        run.train.batch_sequences = v;
    }
    if let Some(v) = args.seq_len {
        run.train.seq_len = v;
    }
    if let Some(v) = args.lora_r {
        run.model.lora_rank = v;
    }
    if let Some(v) = args.lora_alpha {
        run.model.lora_alpha = v;
    }
    if args.use_loraplus {
        run.model.adapter = crate::trainer::AdapterMode::LoraPlus;
    }
    if let Some(v) = args.lr_ratio {
        run.train.lr_ratio = v;
    }
    if let Some(v) = args.lr {
        run.train.lr = v;
    }
    if let Some(v) = args.seed {
        run.train.seed = v;
    }
    if let Some(name) = &args.optimizer {
        run.train.optimizer = serde_json::from_value(serde_json::Value::String(name.clone()))?;
    }
    if args.verify_gradients {
        run.train.verify_every = 1;
    }

    let mut model = Model::new(run.model.clone(), run.train.seed)?;
    let outcome = train(&mut model, &run.train)?;

    let mut metrics_file = std::fs::File::create(&args.output)?;
    for m in &outcome.metrics {
        writeln!(metrics_file, "{}", serde_json::to_string(m)?)?;
    }
    #[derive(Serialize)]
    struct TrainReport<'a> {
        timestamp: u64,
        initial_loss: f64,
        final_loss: f64,
        steps: usize,
        verification: &'a crate::trainer::VerificationReport,
    }
    let report = TrainReport {
        timestamp: unix_timestamp(),
        initial_loss: outcome.initial_loss,
        final_loss: outcome.final_loss,
        steps: outcome.metrics.len(),
        verification: &outcome.final_report,
    };
    let json = serde_json::to_string_pretty(&report)?;
    write_or_print(args.report.as_deref(), &json)?;
    eprintln!(
        "train: loss {:.4} -> {:.4} over {} steps, metrics at {}",
        outcome.initial_loss,
        outcome.final_loss,
        outcome.metrics.len(),
        args.output.display()
    );
    Ok(if outcome.final_report.pass {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

// ----------------------------------------------------------------- analyze

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub timestamp: u64,
    pub preset: String,
    pub ridge_flops_per_byte: f64,
    pub mfu_41184_percent: f64,
    pub mfu_11736_percent: f64,
    pub cce_reduction_151936_c4096: f64,
    pub params_gb_494m_bf16: f64,
    pub optimizer_gb_494m_fp32: f64,
    pub checkpoint_k_star_l24: f64,
    pub checkpoint_k_int_l24: usize,
    pub checkpoint_overhead_k5: f64,
    pub mqa_kv_ratio_h32: f64,
    pub attention_ai_n2048_d64: f64,
    pub flash_speedup_bytes_d128: f64,
    pub flash_speedup_elems_d128: f64,
    /// Human-readable aligned table, one line per quantity.
    pub table: Vec<String>,
}

/// Build the analyze report for the A100 preset. Pure and deterministic.
pub fn analyze_report() -> AnalyzeReport {
    let hw = HardwareSpec::a100();
    let ridge = analysis::ridge_point(&hw);
    let mfu_hi = analysis::mfu(5e8, 41184.0, hw.peak_flops);
    let mfu_lo = analysis::mfu(5e8, 11736.0, hw.peak_flops);
    let reduction = analysis::cce_reduction(151_936, 4096);
    let budget = analysis::memory_budget(&MemoryBudgetInput {
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
    });
    let plan24 = analysis::checkpoint_plan(24);
    let plan25 = analysis::checkpoint_plan(25);
    let kv = analysis::kv_ratio(analysis::AttentionVariant::Mqa, 32);
    let ai = analysis::arithmetic_intensity(analysis::OpKind::Attention { n: 2048.0, d: 64.0 });
    let speedup = analysis::flash_speedup(192.0 * 1024.0, 128.0);

    let table = vec![
        format!(
            "{:<38} ridge={:.0} FLOPs/byte",
            "roofline ridge point (A100)", ridge
        ),
        format!(
            "{:<38} MFU(41184)={:.1}%",
            "model FLOPs utilization", mfu_hi
        ),
        format!(
            "{:<38} MFU(11736)={:.1}%",
            "model FLOPs utilization", mfu_lo
        ),
        format!(
            "{:<38} V/C={:.2} (~{:.0}x)",
            "chunked-CE reduction (V=151936,C=4096)",
            reduction,
            reduction.round()
        ),
        format!(
            "{:<38} {:.2} GB",
            "params 494M @ BF16",
            budget.params_bytes / 1e9
        ),
        format!(
            "{:<38} {:.2} GB",
            "optimizer moments @ FP32",
            budget.optimizer_bytes / 1e9
        ),
        format!(
            "{:<38} k*=sqrt(24)={:.2}, integer k={}",
            "checkpoint plan (L=24)", plan24.k_star, plan24.k_int
        ),
        format!(
            "{:<38} k*={:.0}, overhead={:.1}x",
            "checkpoint plan (L=25)", plan25.k_star, plan25.compute_overhead
        ),
        format!("{:<38} 1/{:.0}", "MQA KV-cache ratio (H=32)", 1.0 / kv),
        format!("{:<38} AI={:.1} FLOPs/byte", "attention (N=2048, d=64)", ai),
        format!(
            "{:<38} M/d={:.0} (bytes) / {:.0} (f32 elems)",
            "tiled-attention IO speedup (d=128)", speedup.sram_as_bytes, speedup.sram_as_elems
        ),
    ];
    AnalyzeReport {
        timestamp: unix_timestamp(),
        preset: "a100".into(),
        ridge_flops_per_byte: ridge,
        mfu_41184_percent: mfu_hi,
        mfu_11736_percent: mfu_lo,
        cce_reduction_151936_c4096: reduction,
        params_gb_494m_bf16: budget.params_bytes / 1e9,
        optimizer_gb_494m_fp32: budget.optimizer_bytes / 1e9,
        checkpoint_k_star_l24: plan24.k_star,
        checkpoint_k_int_l24: plan24.k_int,
        checkpoint_overhead_k5: plan25.compute_overhead,
        mqa_kv_ratio_h32: kv,
        attention_ai_n2048_d64: ai,
        flash_speedup_bytes_d128: speedup.sram_as_bytes,
        flash_speedup_elems_d128: speedup.sram_as_elems,
        table,
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    if args.preset != "a100" {
        return Err(Error::InvalidArgument(format!(
            "analyze: unknown preset {} (bundled: a100)",
            args.preset
        )));
    }
    let report = analyze_report();
    for line in &report.table {
        println!("{line}");
    }
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(EXIT_OK)
}

// ------------------------------------------------------------------- bench

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub timestamp: u64,
    pub cases: Vec<BenchCase>,
}

#[derive(Debug, Serialize)]
pub struct BenchCase {
    pub name: String,
    pub work: String,
    /// Wall-clock measurement; inherently non-reproducible, excluded from
    /// byte-identical comparisons like the timestamp.
    pub millis: f64,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cases = Vec::new();
    let mut timed = |name: &str, work: String, f: &mut dyn FnMut()| {
        let start = std::time::Instant::now();
        f();
        cases.push(BenchCase {
            name: name.to_string(),
            work,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
    };

    let (rows, h, v, c) = (64, 64, 8000, 512);
    let hidden = Tensor::randn(&[rows, h], 1.0, &mut rng);
    let w = Tensor::randn(&[v, h], 0.5, &mut rng);
    let targets: Vec<i64> = (0..rows).map(|_| rng.gen_range(0..v as i64)).collect();
    let cfg = crate::losses::CceConfig::with_chunk_size(c);
    timed(
        "cce_fwd",
        format!("rows={rows} H={h} V={v} C={c}"),
        &mut || {
            let _ = crate::losses::cce_fwd(&hidden, &w, &targets, &cfg).unwrap();
        },
    );
    let logits = hidden.matmul_transb(&w).unwrap();
    timed("ce_naive", format!("rows={rows} V={v}"), &mut || {
        let _ = crate::losses::ce_naive(&logits, &targets, &cfg).unwrap();
    });

    let n = 128;
    let q = Tensor::randn(&[n, 64], 1.0, &mut rng);
    let k = Tensor::randn(&[n, 64], 1.0, &mut rng);
    let vv = Tensor::randn(&[n, 64], 1.0, &mut rng);
    let attn_cfg = crate::layers::AttentionConfig {
        n_heads: 8,
        head_dim: 8,
        causal: true,
        block_q: 16,
        block_kv: 16,
    };
    timed(
        "attention_tiled",
        format!("N={n} heads=8 dh=8"),
        &mut || {
            let _ = crate::layers::attention_tiled(&q, &k, &vv, &attn_cfg, None).unwrap();
        },
    );
    timed(
        "attention_naive",
        format!("N={n} heads=8 dh=8"),
        &mut || {
            let _ = crate::layers::attention_naive(&q, &k, &vv, &attn_cfg, None).unwrap();
        },
    );

    let nparam = 100_000;
    let mut p = Tensor::randn(&[nparam], 1.0, &mut rng);
    let g = Tensor::randn(&[nparam], 1.0, &mut rng);
    let mut state = crate::optim::AdamWState::new(&[nparam], crate::optim::AdamWHyper::default());
    timed("adamw_step", format!("params={nparam}"), &mut || {
        crate::optim::adamw_step(&mut p, &g, &mut state, 1.0, 1.0).unwrap();
    });

    let report = BenchReport {
        timestamp: unix_timestamp(),
        cases,
    };
    for case in &report.cases {
        println!(
            "{:<18} {:<28} {:>10.3} ms",
            case.name, case.work, case.millis
        );
    }
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(EXIT_OK)
}

// --------------------------------------------------------------- dispatch

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::VerificationFailed(_) => EXIT_VERIFY_FAILED,
        Error::NonFiniteGradient => EXIT_VERIFY_FAILED,
        _ => EXIT_BAD_CONFIG,
    }
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Pack(args) => cmd_pack(args),
        Command::Train(args) => cmd_train(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
