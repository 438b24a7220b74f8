//! Toy decoder-only transformer wiring every module into a full train step.
//!
//! Per layer: RMSNorm → attention (RoPE, tiled) → residual → RMSNorm →
//! SwiGLU MLP → residual; final RMSNorm feeds the chunked cross-entropy
//! against the LM head. Gradients come from a hand-written static tape over
//! this fixed graph — each module's backward chained in reverse — and every
//! parameter is checked against central finite differences.
//!
//! Packed batches run block-diagonal causal attention from `cu_seqlens`,
//! with per-sequence position ids driving RoPE and per-sequence next-token
//! targets (the last position of every sequence is ignored).

mod data;
mod io;
mod train;
mod verify;

pub use data::{batches_from_manifest, copy_task_batch, Batch};
pub use io::{load_model, load_tokens, read_tensor, save_model, save_tokens, write_tensor};
pub use train::{train, OptimizerChoice, StepMetrics, TrainConfig, TrainOutcome};
pub use verify::{verify, VerificationReport};

use crate::adapters::{
    column_norms, dora_bwd, dora_fwd, lora_bwd, lora_fwd, DoraAdapter, LoraAdapter,
};
use crate::error::{Error, Result};
use crate::layers::{
    attention_tiled, rmsnorm_bwd, rmsnorm_fwd, rope_apply_inverse, rope_apply_qk, rope_build_cache,
    swiglu_bwd, swiglu_fwd, AttentionConfig, RmsNormCache, RopeCache,
};
use crate::losses::{cce_bwd, cce_fwd, CceConfig, CceResult, IGNORE_INDEX};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterMode {
    Full,
    Lora,
    /// Same parameterization as `Lora`; the optimizer applies the 16x
    /// learning-rate ratio to the B matrices.
    LoraPlus,
    Dora,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Optional; must equal `hidden / heads` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<usize>,
    pub ffn_dim: usize,
    pub vocab: usize,
    pub max_seq: usize,
    pub rope_base: f64,
    pub adapter: AdapterMode,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub rms_eps: f64,
    /// Vocabulary chunk for the fused-linear loss; capped at the vocab.
    pub cce_chunk: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        // Desk-scale defaults; large-model shapes are analysis presets only.
        Self {
            layers: 2,
            hidden: 32,
            heads: 4,
            head_dim: None,
            ffn_dim: 64,
            vocab: 97,
            max_seq: 16,
            rope_base: 10000.0,
            adapter: AdapterMode::Full,
            lora_rank: 4,
            lora_alpha: 8.0,
            rms_eps: 1e-6,
            cce_chunk: 4096,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "model: hidden {} must be divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "model: head_dim must be even for rotary pairing".into(),
            ));
        }
        if let Some(hd) = self.head_dim {
            if hd * self.heads != self.hidden {
                return Err(Error::InvalidArgument(format!(
                    "model: head_dim {hd} x heads {} != hidden {}",
                    self.heads, self.hidden
                )));
            }
        }
        if self.vocab < 2 || self.max_seq < 2 {
            return Err(Error::InvalidArgument(
                "model: need vocab >= 2 and max_seq >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn loss_config(&self) -> CceConfig {
        CceConfig::with_chunk_size(self.cce_chunk.clamp(1, self.vocab))
    }
}

/// Handle into the flat parameter store.
pub type ParamId = usize;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

#[derive(Debug, Clone)]
struct AdapterIds {
    a: ParamId,
    b: ParamId,
    magnitude: Option<ParamId>,
    rank: usize,
    alpha: f64,
}

#[derive(Debug, Clone)]
struct LinearRef {
    w: ParamId,
    adapter: Option<AdapterIds>,
}

#[derive(Debug, Clone)]
struct LayerRefs {
    attn_gamma: ParamId,
    wq: LinearRef,
    wk: LinearRef,
    wv: LinearRef,
    wo: LinearRef,
    mlp_gamma: ParamId,
    w_gate: LinearRef,
    w_up: LinearRef,
    w_down: LinearRef,
}

pub struct Model {
    pub config: ModelConfig,
    params: Vec<Param>,
    embed: ParamId,
    layers: Vec<LayerRefs>,
    final_gamma: ParamId,
    lm_head: ParamId,
    rope: RopeCache,
    /// Trainable fraction the current adapter mode is expected to expose;
    /// fixed at construction so `verify` can detect accidental freezing.
    pub expected_trainable_fraction: f64,
}

fn push_param(params: &mut Vec<Param>, name: String, value: Tensor, trainable: bool) -> ParamId {
    params.push(Param {
        name,
        value,
        trainable,
    });
    params.len() - 1
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<Param> = Vec::new();
        let d = config.hidden;
        let base_trainable = config.adapter == AdapterMode::Full;
        let proj_std = 1.0 / (d as f64).sqrt();

        let embed = push_param(
            &mut params,
            "embed_tokens.weight".into(),
            Tensor::randn(&[config.vocab, d], 0.5, &mut rng),
            base_trainable,
        );

        let linear = |params: &mut Vec<Param>,
                      rng: &mut ChaCha8Rng,
                      name: String,
                      rows: usize,
                      cols: usize|
         -> Result<LinearRef> {
            let w = push_param(
                params,
                format!("{name}.weight"),
                Tensor::randn(&[rows, cols], proj_std, rng),
                base_trainable,
            );
            let adapter = match config.adapter {
                AdapterMode::Full => None,
                AdapterMode::Lora | AdapterMode::LoraPlus | AdapterMode::Dora => {
                    let proto =
                        LoraAdapter::init(rows, cols, config.lora_rank, config.lora_alpha, rng)?;
                    let a = push_param(params, format!("{name}.lora_A"), proto.a, true);
                    let b = push_param(params, format!("{name}.lora_B"), proto.b, true);
                    let magnitude = if config.adapter == AdapterMode::Dora {
                        let norms = column_norms(&params[w].value);
                        Some(push_param(
                            params,
                            format!("{name}.dora_magnitude"),
                            Tensor::new(vec![rows], norms)?,
                            true,
                        ))
                    } else {
                        None
                    };
                    Some(AdapterIds {
                        a,
                        b,
                        magnitude,
                        rank: config.lora_rank,
                        alpha: config.lora_alpha,
                    })
                }
            };
            Ok(LinearRef { w, adapter })
        };

        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let attn_gamma = push_param(
                &mut params,
                format!("layers.{l}.attn_norm.weight"),
                Tensor::filled(&[d], 1.0),
                base_trainable,
            );
            let wq = linear(&mut params, &mut rng, format!("layers.{l}.attn.q"), d, d)?;
            let wk = linear(&mut params, &mut rng, format!("layers.{l}.attn.k"), d, d)?;
            let wv = linear(&mut params, &mut rng, format!("layers.{l}.attn.v"), d, d)?;
            let wo = linear(&mut params, &mut rng, format!("layers.{l}.attn.o"), d, d)?;
            let mlp_gamma = push_param(
                &mut params,
                format!("layers.{l}.mlp_norm.weight"),
                Tensor::filled(&[d], 1.0),
                base_trainable,
            );
            let w_gate = linear(
                &mut params,
                &mut rng,
                format!("layers.{l}.mlp.gate"),
                config.ffn_dim,
                d,
            )?;
            let w_up = linear(
                &mut params,
                &mut rng,
                format!("layers.{l}.mlp.up"),
                config.ffn_dim,
                d,
            )?;
            let w_down = linear(
                &mut params,
                &mut rng,
                format!("layers.{l}.mlp.down"),
                d,
                config.ffn_dim,
            )?;
            layers.push(LayerRefs {
                attn_gamma,
                wq,
                wk,
                wv,
                wo,
                mlp_gamma,
                w_gate,
                w_up,
                w_down,
            });
        }

        let final_gamma = push_param(
            &mut params,
            "final_norm.weight".into(),
            Tensor::filled(&[d], 1.0),
            base_trainable,
        );
        let lm_head = push_param(
            &mut params,
            "lm_head.weight".into(),
            Tensor::randn(&[config.vocab, d], proj_std, &mut rng),
            base_trainable,
        );

        let rope = rope_build_cache(config.max_seq, config.head_dim(), config.rope_base)?;
        let trainable: usize = params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum();
        let total: usize = params.iter().map(|p| p.value.len()).sum();
        Ok(Self {
            config,
            params,
            embed,
            layers,
            final_gamma,
            lm_head,
            rope,
            expected_trainable_fraction: trainable as f64 / total as f64,
        })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Vec<Param> {
        &mut self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn trainable_fraction(&self) -> f64 {
        let trainable: usize = self
            .params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum();
        let total: usize = self.params.iter().map(|p| p.value.len()).sum();
        trainable as f64 / total as f64
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.trainable = trainable;
        }
    }

    fn lora_view(&self, ids: &AdapterIds) -> LoraAdapter {
        LoraAdapter {
            a: self.params[ids.a].value.clone(),
            b: self.params[ids.b].value.clone(),
            rank: ids.rank,
            alpha: ids.alpha,
        }
    }

    fn dora_view(&self, ids: &AdapterIds) -> DoraAdapter {
        DoraAdapter {
            lora: self.lora_view(ids),
            magnitude: self.params[ids.magnitude.expect("dora adapter")]
                .value
                .clone(),
        }
    }

    fn linear_fwd(&self, x: &Tensor, lin: &LinearRef) -> Result<Tensor> {
        let w = &self.params[lin.w].value;
        match &lin.adapter {
            None => x.matmul_transb(w),
            Some(ids) if ids.magnitude.is_none() => lora_fwd(x, w, &self.lora_view(ids)),
            Some(ids) => dora_fwd(x, w, &self.dora_view(ids)),
        }
    }

    /// Backward through a projection: accumulates parameter gradients and
    /// returns the input gradient.
    fn linear_bwd(
        &self,
        dy: &Tensor,
        x: &Tensor,
        lin: &LinearRef,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        let w = &self.params[lin.w].value;
        match &lin.adapter {
            None => {
                let dx = dy.matmul(w)?;
                if self.params[lin.w].trainable {
                    grads.accumulate(lin.w, dy.matmul_transa(x)?);
                }
                Ok(dx)
            }
            Some(ids) if ids.magnitude.is_none() => {
                let (dx, da, db) = lora_bwd(dy, x, w, &self.lora_view(ids))?;
                grads.accumulate(ids.a, da);
                grads.accumulate(ids.b, db);
                Ok(dx)
            }
            Some(ids) => {
                let (dx, da, db, dm) = dora_bwd(dy, x, w, &self.dora_view(ids))?;
                grads.accumulate(ids.a, da);
                grads.accumulate(ids.b, db);
                grads.accumulate(ids.magnitude.expect("dora adapter"), dm);
                Ok(dx)
            }
        }
    }

    fn attention_config(&self) -> AttentionConfig {
        AttentionConfig {
            n_heads: self.config.heads,
            head_dim: self.config.head_dim(),
            causal: true,
            block_q: 8,
            block_kv: 8,
        }
    }
}

/// Gradients aligned with the parameter store. Missing entries mean "no
/// gradient flowed" and read as zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            slots: vec![None; model.params.len()],
        }
    }

    pub fn accumulate(&mut self, id: ParamId, grad: Tensor) {
        match &mut self.slots[id] {
            Some(existing) => existing.add_assign(&grad),
            slot @ None => *slot = Some(grad),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots[id].as_ref()
    }

    /// Global L2 norm over trainable parameters.
    pub fn global_norm(&self, model: &Model) -> f64 {
        let mut sq = 0.0;
        for (i, p) in model.params.iter().enumerate() {
            if !p.trainable {
                continue;
            }
            if let Some(g) = &self.slots[i] {
                for &v in g.data() {
                    sq += v * v;
                }
            }
        }
        sq.sqrt()
    }

    pub fn trainable_grads<'a>(&'a self, model: &'a Model) -> impl Iterator<Item = &'a Tensor> {
        model
            .params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.trainable)
            .filter_map(|(i, _)| self.slots[i].as_ref())
    }
}

struct LayerCache {
    h_in: Tensor,
    rn1: Tensor,
    c1: RmsNormCache,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn_out: Tensor,
    h_mid: Tensor,
    rn2: Tensor,
    c2: RmsNormCache,
    gate: Tensor,
    up: Tensor,
    act: Tensor,
}

pub struct ForwardCaches {
    layer_caches: Vec<LayerCache>,
    h_final_in: Tensor,
    hf: Tensor,
    cf: RmsNormCache,
    pub targets: Vec<i64>,
    pub positions: Vec<usize>,
    pub cce: CceResult,
    pub loss: f64,
}

/// Next-token targets with per-sequence boundaries: within each segment the
/// target is the following token; the segment's last position is ignored.
pub fn shifted_targets(tokens: &[u32], cu_seqlens: &[usize]) -> Vec<i64> {
    let mut targets = vec![IGNORE_INDEX; tokens.len()];
    for w in cu_seqlens.windows(2) {
        for i in w[0]..w[1].saturating_sub(1) {
            targets[i] = tokens[i + 1] as i64;
        }
    }
    targets
}

pub fn forward_loss(model: &Model, batch: &Batch) -> Result<(f64, ForwardCaches)> {
    let cfg = &model.config;
    batch.validate(cfg.vocab, cfg.max_seq)?;
    let t = batch.tokens.len();
    let d = cfg.hidden;

    let positions = batch.position_ids();
    let targets = shifted_targets(&batch.tokens, &batch.cu_seqlens);

    // Token embedding.
    let mut h = Tensor::zeros(&[t, d]);
    let embed = &model.params[model.embed].value;
    for (row, &tok) in batch.tokens.iter().enumerate() {
        h.row_mut(row).copy_from_slice(embed.row(tok as usize));
    }

    let attn_cfg = model.attention_config();
    let segments = batch.cu_seqlens.clone();
    let mut layer_caches = Vec::with_capacity(cfg.layers);
    for layer in &model.layers {
        let h_in = h.clone();
        let (rn1, c1) = rmsnorm_fwd(&h_in, &model.params[layer.attn_gamma].value, cfg.rms_eps)?;
        let q0 = model.linear_fwd(&rn1, &layer.wq)?;
        let k0 = model.linear_fwd(&rn1, &layer.wk)?;
        let v = model.linear_fwd(&rn1, &layer.wv)?;
        let (q, k) = rope_apply_qk(&q0, &k0, &positions, &model.rope)?;
        let attn = attention_tiled(&q, &k, &v, &attn_cfg, Some(&segments))?;
        let attn_out = attn.out;
        let o = model.linear_fwd(&attn_out, &layer.wo)?;
        let h_mid = h_in.zip_map(&o, |a, b| a + b)?;

        let (rn2, c2) = rmsnorm_fwd(&h_mid, &model.params[layer.mlp_gamma].value, cfg.rms_eps)?;
        let gate = model.linear_fwd(&rn2, &layer.w_gate)?;
        let up = model.linear_fwd(&rn2, &layer.w_up)?;
        let act = swiglu_fwd(&gate, &up)?;
        let mlp_out = model.linear_fwd(&act, &layer.w_down)?;
        h = h_mid.zip_map(&mlp_out, |a, b| a + b)?;

        layer_caches.push(LayerCache {
            h_in,
            rn1,
            c1,
            q,
            k,
            v,
            attn_out,
            h_mid,
            rn2,
            c2,
            gate,
            up,
            act,
        });
    }

    let h_final_in = h;
    let (hf, cf) = rmsnorm_fwd(
        &h_final_in,
        &model.params[model.final_gamma].value,
        cfg.rms_eps,
    )?;
    let loss_cfg = cfg.loss_config();
    let cce = cce_fwd(&hf, &model.params[model.lm_head].value, &targets, &loss_cfg)?;
    let loss = cce.mean_loss();
    Ok((
        loss,
        ForwardCaches {
            layer_caches,
            h_final_in,
            hf,
            cf,
            targets,
            positions,
            cce,
            loss,
        },
    ))
}

/// Attention backward for one head slice via softmax recompute:
/// `dS = P ⊙ (dP − rowsum(dP ⊙ P))`, then `dQ = dS·K·scale`,
/// `dK = dSᵀ·Q·scale`, `dV = Pᵀ·dO`. Masked entries carry `P = 0` and drop
/// out; fully-masked (degenerate) rows contribute nothing.
#[allow(clippy::too_many_arguments)]
fn attention_bwd_head(
    dq: &mut Tensor,
    dk: &mut Tensor,
    dv: &mut Tensor,
    d_out: &Tensor,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    off: usize,
    dh: usize,
    seg: &[usize],
    causal: bool,
) {
    let n = q.rows();
    let scale = 1.0 / (dh as f64).sqrt();
    for i in 0..n {
        let qi = &q.row(i)[off..off + dh];
        let mut scores = vec![f64::NEG_INFINITY; n];
        let mut m = f64::NEG_INFINITY;
        for (j, s) in scores.iter_mut().enumerate() {
            if seg[j] != seg[i] || (causal && j > i) {
                continue;
            }
            let kj = &k.row(j)[off..off + dh];
            *s = qi.iter().zip(kj.iter()).map(|(a, b)| a * b).sum::<f64>() * scale;
            m = m.max(*s);
        }
        if m == f64::NEG_INFINITY {
            continue;
        }
        let mut probs = vec![0.0; n];
        let mut denom = 0.0;
        for (p, &s) in probs.iter_mut().zip(scores.iter()) {
            if s > f64::NEG_INFINITY {
                *p = (s - m).exp();
                denom += *p;
            }
        }
        for p in &mut probs {
            *p /= denom;
        }

        let doi = &d_out.row(i)[off..off + dh];
        let mut dp = vec![0.0; n];
        let mut inner = 0.0;
        for (j, p) in probs.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let vj = &v.row(j)[off..off + dh];
            let d: f64 = doi.iter().zip(vj.iter()).map(|(a, b)| a * b).sum();
            dp[j] = d;
            inner += d * p;
        }
        for (j, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let ds = p * (dp[j] - inner) * scale;
            let kj = &k.row(j)[off..off + dh];
            let dqi = &mut dq.row_mut(i)[off..off + dh];
            for (g, &kv) in dqi.iter_mut().zip(kj.iter()) {
                *g += ds * kv;
            }
            let dkj = &mut dk.row_mut(j)[off..off + dh];
            for (g, &qv) in dkj.iter_mut().zip(qi.iter()) {
                *g += ds * qv;
            }
            let dvj = &mut dv.row_mut(j)[off..off + dh];
            for (g, &dov) in dvj.iter_mut().zip(doi.iter()) {
                *g += p * dov;
            }
        }
    }
}

pub fn backward(model: &Model, batch: &Batch, caches: &ForwardCaches) -> Result<Gradients> {
    let cfg = &model.config;
    let mut grads = Gradients::zeros_like(model);
    let loss_cfg = cfg.loss_config();

    let (dhf, d_lm) = cce_bwd(
        &caches.hf,
        &model.params[model.lm_head].value,
        &caches.targets,
        &caches.cce,
        &loss_cfg,
    )?;
    if model.params[model.lm_head].trainable {
        grads.accumulate(model.lm_head, d_lm);
    }
    let (mut dh, d_gamma_f) = rmsnorm_bwd(
        &dhf,
        &caches.h_final_in,
        &model.params[model.final_gamma].value,
        &caches.cf,
    )?;
    if model.params[model.final_gamma].trainable {
        grads.accumulate(model.final_gamma, d_gamma_f);
    }

    let n = batch.tokens.len();
    let mut seg = vec![0usize; n];
    for (s, w) in batch.cu_seqlens.windows(2).enumerate() {
        for id in seg.iter_mut().take(w[1]).skip(w[0]) {
            *id = s;
        }
    }
    let dh_dim = cfg.head_dim();

    for (layer, cache) in model.layers.iter().zip(caches.layer_caches.iter()).rev() {
        // MLP branch: h = h_mid + down(act)
        let dact = model.linear_bwd(&dh, &cache.act, &layer.w_down, &mut grads)?;
        let (dgate, dup) = swiglu_bwd(&dact, &cache.gate, &cache.up)?;
        let mut drn2 = model.linear_bwd(&dgate, &cache.rn2, &layer.w_gate, &mut grads)?;
        drn2.add_assign(&model.linear_bwd(&dup, &cache.rn2, &layer.w_up, &mut grads)?);
        let (dh_norm2, d_gamma2) = rmsnorm_bwd(
            &drn2,
            &cache.h_mid,
            &model.params[layer.mlp_gamma].value,
            &cache.c2,
        )?;
        if model.params[layer.mlp_gamma].trainable {
            grads.accumulate(layer.mlp_gamma, d_gamma2);
        }
        let mut dh_mid = dh; // residual trunk
        dh_mid.add_assign(&dh_norm2);

        // Attention branch: h_mid = h_in + o(attn_out)
        let d_attn_out = model.linear_bwd(&dh_mid, &cache.attn_out, &layer.wo, &mut grads)?;
        let mut dq = Tensor::zeros(cache.q.shape());
        let mut dk = Tensor::zeros(cache.k.shape());
        let mut dv = Tensor::zeros(cache.v.shape());
        for h_idx in 0..cfg.heads {
            attention_bwd_head(
                &mut dq,
                &mut dk,
                &mut dv,
                &d_attn_out,
                &cache.q,
                &cache.k,
                &cache.v,
                h_idx * dh_dim,
                dh_dim,
                &seg,
                true,
            );
        }
        // Rotations are orthogonal: backward is the inverse rotation.
        let dq0 = rope_apply_inverse(&dq, &caches.positions, &model.rope)?;
        let dk0 = rope_apply_inverse(&dk, &caches.positions, &model.rope)?;
        let mut drn1 = model.linear_bwd(&dq0, &cache.rn1, &layer.wq, &mut grads)?;
        drn1.add_assign(&model.linear_bwd(&dk0, &cache.rn1, &layer.wk, &mut grads)?);
        drn1.add_assign(&model.linear_bwd(&dv, &cache.rn1, &layer.wv, &mut grads)?);
        let (dh_norm1, d_gamma1) = rmsnorm_bwd(
            &drn1,
            &cache.h_in,
            &model.params[layer.attn_gamma].value,
            &cache.c1,
        )?;
        if model.params[layer.attn_gamma].trainable {
            grads.accumulate(layer.attn_gamma, d_gamma1);
        }
        dh = dh_mid;
        dh.add_assign(&dh_norm1);
    }

    // Embedding scatter-add.
    if model.params[model.embed].trainable {
        let mut d_embed = Tensor::zeros(&[cfg.vocab, cfg.hidden]);
        for (row, &tok) in batch.tokens.iter().enumerate() {
            let src = dh.row(row).to_vec();
            let dst = d_embed.row_mut(tok as usize);
            for (dd, s) in dst.iter_mut().zip(src.iter()) {
                *dd += s;
            }
        }
        grads.accumulate(model.embed, d_embed);
    }
    Ok(grads)
}
