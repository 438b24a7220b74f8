//! Batches and the synthetic copy task.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A (possibly packed) token batch: flattened ids plus sequence boundaries.
/// A single unpacked sequence is `cu_seqlens = [0, len]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Batch {
    pub tokens: Vec<u32>,
    pub cu_seqlens: Vec<usize>,
}

impl Batch {
    pub fn single(tokens: Vec<u32>) -> Self {
        let n = tokens.len();
        Self {
            tokens,
            cu_seqlens: vec![0, n],
        }
    }

    pub fn num_sequences(&self) -> usize {
        self.cu_seqlens.len().saturating_sub(1)
    }

    pub fn seq_lengths(&self) -> Vec<usize> {
        self.cu_seqlens.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Per-token positions, resetting at each sequence boundary.
    pub fn position_ids(&self) -> Vec<usize> {
        crate::packing::position_ids(&self.seq_lengths())
    }

    pub fn validate(&self, vocab: usize, max_seq: usize) -> Result<()> {
        if self.cu_seqlens.first() != Some(&0)
            || self.cu_seqlens.last() != Some(&self.tokens.len())
            || self.cu_seqlens.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidArgument(format!(
                "batch: bad cu_seqlens {:?} for {} tokens",
                self.cu_seqlens,
                self.tokens.len()
            )));
        }
        if let Some(&tok) = self.tokens.iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::TargetOutOfRange {
                target: tok as i64,
                vocab,
            });
        }
        if self.seq_lengths().iter().any(|&l| l > max_seq) {
            return Err(Error::InvalidArgument(format!(
                "batch: sequence longer than max_seq {max_seq}"
            )));
        }
        Ok(())
    }
}

/// Assemble packed batches from a packing manifest plus the flat token
/// stream it indexes. `ids`/`lengths` give the dataset order (the same
/// JSONL the packer consumed); `tokens` is the concatenation of all
/// sequences in that order.
pub fn batches_from_manifest(
    manifest: &crate::packing::PackingManifest,
    ids: &[String],
    lengths: &[usize],
    tokens: &[u32],
) -> Result<Vec<Batch>> {
    if ids.len() != lengths.len() {
        return Err(Error::InvalidArgument(format!(
            "manifest batches: {} ids vs {} lengths",
            ids.len(),
            lengths.len()
        )));
    }
    let total: usize = lengths.iter().sum();
    if total != tokens.len() {
        return Err(Error::InvalidArgument(format!(
            "manifest batches: lengths sum to {total} but token stream holds {}",
            tokens.len()
        )));
    }
    let offsets = crate::packing::cu_seqlens(lengths);
    let index_of = |id: &str| -> Result<usize> {
        ids.iter()
            .position(|candidate| candidate == id)
            .ok_or_else(|| Error::InvalidArgument(format!("manifest id {id} not in dataset")))
    };
    let mut batches = Vec::with_capacity(manifest.bins.len());
    for bin in &manifest.bins {
        let mut flat = Vec::new();
        for (id, &len) in bin.ids.iter().zip(bin.lengths.iter()) {
            let seq = index_of(id)?;
            if lengths[seq] != len {
                return Err(Error::InvalidArgument(format!(
                    "manifest id {id}: bin says length {len}, dataset says {}",
                    lengths[seq]
                )));
            }
            flat.extend_from_slice(&tokens[offsets[seq]..offsets[seq] + len]);
        }
        batches.push(Batch {
            tokens: flat,
            cu_seqlens: bin.cu_seqlens.clone(),
        });
    }
    Ok(batches)
}

/// Copy task: period-2 alternating sequences `a b a b a …`, so the next
/// token always equals the one *before* the previous — the model learns to
/// look back one position and emit that token.
pub fn copy_task_batch(
    rng: &mut ChaCha8Rng,
    sequences: usize,
    seq_len: usize,
    vocab: usize,
) -> Batch {
    let mut tokens = Vec::with_capacity(sequences * seq_len);
    let mut cu = Vec::with_capacity(sequences + 1);
    cu.push(0);
    for _ in 0..sequences {
        let a = rng.gen_range(0..vocab as u32);
        let mut b = rng.gen_range(0..vocab as u32);
        if b == a {
            b = (b + 1) % vocab as u32;
        }
        for i in 0..seq_len {
            tokens.push(if i % 2 == 0 { a } else { b });
        }
        cu.push(tokens.len());
    }
    Batch {
        tokens,
        cu_seqlens: cu,
    }
}
