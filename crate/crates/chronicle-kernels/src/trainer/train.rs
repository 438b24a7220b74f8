//! The training loop: per step, one forward/backward on a fresh copy-task
//! batch, a single global clip coefficient, one optimizer step per
//! parameter tensor, and a verification report every `verify_every` steps
//! that aborts the run naming the failed check.

use super::verify::{report_from, VerificationReport};
use super::{backward, copy_task_batch, forward_loss, Model};
use crate::error::{Error, Result};
use crate::optim::{
    build_lora_plus_groups, clip_coefficient, muon_step, AdamAtan2State, AdamWHyper, AdamWState,
    ParamGroup, QuantizedAdamWState, ScheduleFreeState, DEFAULT_STATE_BLOCK,
};
use crate::tensor::Tensor;
use crate::trainer::AdapterMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerChoice {
    #[serde(rename = "adamw")]
    AdamW,
    /// AdamW with 8-bit block-quantized moments.
    #[serde(rename = "adamw8bit")]
    AdamW8bit,
    #[serde(rename = "schedule_free")]
    ScheduleFree,
    /// Orthogonalized updates for matrices; vectors fall back to AdamW.
    #[serde(rename = "muon")]
    Muon,
    #[serde(rename = "adam_atan2")]
    AdamAtan2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub optimizer: OptimizerChoice,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Linear warmup from zero over `ceil(warmup_ratio · steps)` steps.
    pub warmup_ratio: f64,
    pub max_grad_norm: f64,
    /// LoRA+ learning-rate (and weight-decay) multiplier for B matrices;
    /// applied only in `LoraPlus` adapter mode.
    pub lr_ratio: f64,
    pub batch_sequences: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub verify_every: usize,
    /// Newton-Schulz iterations for Muon.
    pub muon_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            optimizer: OptimizerChoice::AdamW,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_ratio: 0.03,
            max_grad_norm: 1.0,
            lr_ratio: 16.0,
            batch_sequences: 8,
            seq_len: 16,
            seed: 42,
            verify_every: 50,
            muon_steps: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<StepMetrics>,
    pub final_report: VerificationReport,
    pub initial_loss: f64,
    pub final_loss: f64,
}

enum OptState {
    AdamW(AdamWState),
    AdamW8bit(QuantizedAdamWState),
    ScheduleFree(ScheduleFreeState),
    Muon {
        lr: f64,
        ns_steps: usize,
        fallback: AdamWState,
    },
    AdamAtan2(AdamAtan2State),
}

impl OptState {
    fn step(
        &mut self,
        param: &mut Tensor,
        grad: &Tensor,
        clip_coef: f64,
        lr_factor: f64,
    ) -> Result<()> {
        match self {
            OptState::AdamW(state) => {
                crate::optim::adamw_step(param, grad, state, clip_coef, lr_factor)
            }
            OptState::AdamW8bit(state) => state.step(param, grad, clip_coef, lr_factor),
            OptState::ScheduleFree(state) => state.step(param, grad, clip_coef, lr_factor),
            OptState::Muon {
                lr,
                ns_steps,
                fallback,
            } => {
                if param.shape().len() == 2 && grad.frobenius_norm() > 1e-12 {
                    let clipped = grad.map(|g| g * clip_coef);
                    muon_step(param, &clipped, *lr * lr_factor, *ns_steps)
                } else {
                    crate::optim::adamw_step(param, grad, fallback, clip_coef, lr_factor)
                }
            }
            OptState::AdamAtan2(state) => state.step(param, grad, clip_coef, lr_factor),
        }
    }
}

/// Per-parameter `(lr, weight_decay)` honoring LoRA+ groups when active.
fn resolve_groups(model: &Model, cfg: &TrainConfig) -> Vec<(f64, f64)> {
    let names = model.param_names();
    if model.config.adapter == AdapterMode::LoraPlus {
        let groups: Vec<ParamGroup> =
            build_lora_plus_groups(&names, cfg.lr, cfg.lr_ratio, cfg.weight_decay);
        let mut out = vec![(cfg.lr, cfg.weight_decay); names.len()];
        for g in &groups {
            for &idx in &g.members {
                out[idx] = (g.lr, g.weight_decay);
            }
        }
        out
    } else {
        vec![(cfg.lr, cfg.weight_decay); names.len()]
    }
}

fn build_states(model: &Model, cfg: &TrainConfig) -> Vec<OptState> {
    let hypers = resolve_groups(model, cfg);
    model
        .params()
        .iter()
        .zip(hypers)
        .map(|(p, (lr, wd))| {
            let hyper = AdamWHyper {
                lr,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                eps: cfg.eps,
                weight_decay: wd,
            };
            let shape = p.value.shape();
            match cfg.optimizer {
                OptimizerChoice::AdamW => OptState::AdamW(AdamWState::new(shape, hyper)),
                OptimizerChoice::AdamW8bit => {
                    OptState::AdamW8bit(QuantizedAdamWState::new(shape, hyper, DEFAULT_STATE_BLOCK))
                }
                OptimizerChoice::ScheduleFree => {
                    OptState::ScheduleFree(ScheduleFreeState::new(&p.value, lr, cfg.beta1))
                }
                OptimizerChoice::Muon => OptState::Muon {
                    lr,
                    ns_steps: cfg.muon_steps,
                    fallback: AdamWState::new(shape, hyper),
                },
                OptimizerChoice::AdamAtan2 => {
                    OptState::AdamAtan2(AdamAtan2State::new(shape, hyper))
                }
            }
        })
        .collect()
}

fn warmup_factor(step: usize, cfg: &TrainConfig) -> f64 {
    let warmup_steps = (cfg.warmup_ratio * cfg.steps as f64).ceil().max(1.0) as usize;
    ((step + 1) as f64 / warmup_steps as f64).min(1.0)
}

/// Train on the synthetic copy task. Returns the metrics log and the final
/// verification report; aborts with `VerificationFailed` naming the first
/// failing check.
pub fn train(model: &mut Model, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut states = build_states(model, cfg);
    let mut metrics = Vec::with_capacity(cfg.steps);
    let mut initial_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    let mut last_batch = None;

    for step in 0..cfg.steps {
        let batch = copy_task_batch(
            &mut rng,
            cfg.batch_sequences,
            cfg.seq_len.min(model.config.max_seq),
            model.config.vocab,
        );
        let (loss, caches) = forward_loss(model, &batch)?;
        if step == 0 {
            initial_loss = loss;
        }
        final_loss = loss;
        let grads = backward(model, &batch, &caches)?;
        let grad_norm = grads.global_norm(model);
        let clip = clip_coefficient(grads.trainable_grads(model), cfg.max_grad_norm);
        let lr_factor = warmup_factor(step, cfg);

        if cfg.verify_every > 0 && step % cfg.verify_every == 0 {
            let report = report_from(model, loss, &grads);
            if !report.pass {
                return Err(Error::VerificationFailed(report.failures.join(", ")));
            }
        }

        for (i, state) in states.iter_mut().enumerate() {
            if !model.params()[i].trainable {
                continue;
            }
            if let Some(g) = grads.get(i) {
                let g = g.clone();
                state.step(&mut model.params_mut()[i].value, &g, clip, lr_factor)?;
            }
        }

        metrics.push(StepMetrics {
            step,
            loss,
            grad_norm,
            lr: cfg.lr * lr_factor,
        });
        last_batch = Some(batch);
    }

    let final_report = match last_batch {
        Some(batch) => super::verify(model, &batch)?,
        None => {
            return Err(Error::InvalidArgument("train: zero steps requested".into()));
        }
    };
    Ok(TrainOutcome {
        metrics,
        final_report,
        initial_loss,
        final_loss,
    })
}
