//! Best-Fit-Decreasing sequence packing.
//!
//! Sort lengths descending, place each item in the feasible bin with the
//! least remaining capacity (ties to the lowest bin index), open a new bin
//! otherwise. Guaranteed within `11/9·OPT + 6/9` bins of optimal (Johnson
//! 1973). Oversized items are skipped and reported, never silently dropped.
//!
//! Also provides the varlen bookkeeping packed attention consumes:
//! `cu_seqlens` prefix boundaries and per-token position ids that reset at
//! every sequence start.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One packed bin: the `(sequence id, length)` pairs it holds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Bin {
    pub items: Vec<(usize, usize)>,
    pub cu_seqlens: Vec<usize>,
    pub position_ids: Vec<usize>,
}

impl Bin {
    pub fn used(&self) -> usize {
        self.items.iter().map(|&(_, l)| l).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PackedBatch {
    pub capacity: usize,
    pub bins: Vec<Bin>,
    /// Ids of sequences longer than the capacity, skipped during packing.
    pub oversized: Vec<usize>,
}

impl PackedBatch {
    pub fn total_packed_tokens(&self) -> usize {
        self.bins.iter().map(Bin::used).sum()
    }

    /// `1 − Σ len / (bins · C)`: the fraction of packed capacity left idle.
    pub fn packed_waste(&self) -> f64 {
        if self.bins.is_empty() {
            return 0.0;
        }
        1.0 - self.total_packed_tokens() as f64 / (self.bins.len() * self.capacity) as f64
    }
}

/// Prefix sums with a leading 0: `[3,2,4] -> [0,3,5,9]`.
pub fn cu_seqlens(lengths: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(lengths.len() + 1);
    out.push(0);
    let mut acc = 0;
    for &l in lengths {
        acc += l;
        out.push(acc);
    }
    out
}

/// Concatenated `0..len` ranges: `[3,2] -> [0,1,2,0,1]`.
pub fn position_ids(lengths: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(lengths.iter().sum());
    for &l in lengths {
        out.extend(0..l);
    }
    out
}

/// Best-Fit Decreasing. Deterministic: stable sort by descending length
/// (equal lengths keep input order) and lowest-index tie-break on bins.
pub fn pack_bfd(lengths: &[usize], capacity: usize) -> Result<PackedBatch> {
    if capacity == 0 {
        return Err(Error::InvalidArgument(
            "pack_bfd: capacity must be >= 1".into(),
        ));
    }
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]).then(a.cmp(&b)));

    let mut bins: Vec<(Vec<(usize, usize)>, usize)> = Vec::new(); // (items, remaining)
    let mut oversized = Vec::new();
    for id in order {
        let len = lengths[id];
        if len > capacity {
            oversized.push(id);
            continue;
        }
        let mut best: Option<usize> = None;
        let mut best_remaining = capacity + 1;
        for (idx, &(_, remaining)) in bins.iter().enumerate() {
            if remaining >= len && remaining < best_remaining {
                best = Some(idx);
                best_remaining = remaining;
            }
        }
        match best {
            Some(idx) => {
                bins[idx].0.push((id, len));
                bins[idx].1 -= len;
            }
            None => bins.push((vec![(id, len)], capacity - len)),
        }
    }
    oversized.sort_unstable();

    let bins = bins
        .into_iter()
        .map(|(items, _)| {
            let lens: Vec<usize> = items.iter().map(|&(_, l)| l).collect();
            Bin {
                cu_seqlens: cu_seqlens(&lens),
                position_ids: position_ids(&lens),
                items,
            }
        })
        .collect();
    Ok(PackedBatch {
        capacity,
        bins,
        oversized,
    })
}

/// Exhaustive minimum-bin count for small instances — the oracle the BFD
/// approximation bound is checked against. Branch and bound over placements;
/// exponential, intended for n ≤ ~12.
pub fn optimal_bins(lengths: &[usize], capacity: usize) -> usize {
    let items: Vec<usize> = lengths.iter().copied().filter(|&l| l <= capacity).collect();
    if items.is_empty() {
        return 0;
    }
    // Descending order tightens the bound early.
    let mut items = items;
    items.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = items.iter().sum();
    let lower = total.div_ceil(capacity);
    let mut best = items.len();

    fn dfs(
        items: &[usize],
        idx: usize,
        bins: &mut Vec<usize>, // remaining capacities
        capacity: usize,
        best: &mut usize,
        lower: usize,
    ) {
        if *best == lower {
            return;
        }
        if idx == items.len() {
            *best = (*best).min(bins.len());
            return;
        }
        if bins.len() >= *best {
            return;
        }
        let len = items[idx];
        let mut tried = Vec::new();
        for b in 0..bins.len() {
            if bins[b] >= len && !tried.contains(&bins[b]) {
                tried.push(bins[b]); // identical remainders are symmetric
                bins[b] -= len;
                dfs(items, idx + 1, bins, capacity, best, lower);
                bins[b] += len;
            }
        }
        bins.push(capacity - len);
        dfs(items, idx + 1, bins, capacity, best, lower);
        bins.pop();
    }

    let mut bins = Vec::new();
    dfs(&items, 0, &mut bins, capacity, &mut best, lower);
    best
}

/// One token-capped batch produced by [`token_batches`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenBatch {
    pub ids: Vec<usize>,
    pub total_tokens: usize,
    /// `Σ len / (k · max len)`: how full a padded tensor of this batch is.
    pub utilization: f64,
}

/// Greedy in-order batching capped by total tokens per batch.
pub fn token_batches(lengths: &[usize], t_max: usize) -> Result<Vec<TokenBatch>> {
    if let Some(&too_big) = lengths.iter().find(|&&l| l > t_max) {
        return Err(Error::InvalidArgument(format!(
            "token_batches: length {too_big} exceeds budget {t_max}"
        )));
    }
    let mut batches = Vec::new();
    let mut ids: Vec<usize> = Vec::new();
    let mut used = 0usize;
    let finish = |ids: &mut Vec<usize>, used: &mut usize, batches: &mut Vec<TokenBatch>| {
        if ids.is_empty() {
            return;
        }
        let max_len = ids.iter().map(|&i| lengths[i]).max().unwrap_or(0);
        batches.push(TokenBatch {
            utilization: *used as f64 / (ids.len() * max_len) as f64,
            total_tokens: *used,
            ids: std::mem::take(ids),
        });
        *used = 0;
    };
    for (i, &l) in lengths.iter().enumerate() {
        if used + l > t_max {
            finish(&mut ids, &mut used, &mut batches);
        }
        ids.push(i);
        used += l;
    }
    finish(&mut ids, &mut used, &mut batches);
    Ok(batches)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WasteReport {
    /// `(L_max − mean) / L_max`: fraction of a pad-to-max batch that is
    /// padding.
    pub pad_to_max_waste: f64,
    /// Idle fraction of the BFD-packed bins at capacity `L_max`.
    pub packed_waste: f64,
    pub bins_used: usize,
    pub total_tokens: usize,
    pub mean_length: f64,
    pub max_length: usize,
}

pub fn waste_stats(lengths: &[usize], l_max: usize) -> Result<WasteReport> {
    if lengths.is_empty() {
        return Err(Error::EmptyReduction);
    }
    let total: usize = lengths.iter().sum();
    let mean = total as f64 / lengths.len() as f64;
    let packed = pack_bfd(lengths, l_max)?;
    Ok(WasteReport {
        pad_to_max_waste: (l_max as f64 - mean) / l_max as f64,
        packed_waste: packed.packed_waste(),
        bins_used: packed.bins.len(),
        total_tokens: total,
        mean_length: mean,
        max_length: lengths.iter().copied().max().unwrap_or(0),
    })
}

/// JSONL input record: `{"id": "...", "length": 123}`. A bare JSON array of
/// token ids is also accepted; its length is used and the id is the line
/// number.
#[derive(Debug, Deserialize)]
struct LengthRecord {
    id: String,
    length: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestStats {
    pub num_sequences: usize,
    pub num_bins: usize,
    pub oversized: Vec<String>,
    pub packed_waste: f64,
    pub pad_to_max_waste: f64,
}

/// The JSON packing manifest the `pack` command emits.
#[derive(Debug, Clone, Serialize)]
pub struct PackingManifest {
    pub capacity: usize,
    pub bins: Vec<ManifestBin>,
    pub stats: ManifestStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestBin {
    pub ids: Vec<String>,
    pub lengths: Vec<usize>,
    pub cu_seqlens: Vec<usize>,
    pub position_ids: Vec<usize>,
}

/// Reads `{"id", "length"}` JSONL (or raw token-id array lines) and returns
/// `(ids, lengths)`.
pub fn read_lengths_jsonl(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut ids = Vec::new();
    let mut lengths = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(rec) = serde_json::from_str::<LengthRecord>(&line) {
            ids.push(rec.id);
            lengths.push(rec.length);
        } else {
            let tokens: Vec<i64> = serde_json::from_str(&line)?;
            ids.push(lineno.to_string());
            lengths.push(tokens.len());
        }
    }
    Ok((ids, lengths))
}

pub fn build_manifest(
    ids: &[String],
    lengths: &[usize],
    capacity: usize,
) -> Result<PackingManifest> {
    let packed = pack_bfd(lengths, capacity)?;
    let waste = waste_stats(lengths, capacity)?;
    let bins = packed
        .bins
        .iter()
        .map(|bin| ManifestBin {
            ids: bin.items.iter().map(|&(id, _)| ids[id].clone()).collect(),
            lengths: bin.items.iter().map(|&(_, l)| l).collect(),
            cu_seqlens: bin.cu_seqlens.clone(),
            position_ids: bin.position_ids.clone(),
        })
        .collect();
    Ok(PackingManifest {
        capacity,
        bins,
        stats: ManifestStats {
            num_sequences: lengths.len(),
            num_bins: packed.bins.len(),
            oversized: packed.oversized.iter().map(|&i| ids[i].clone()).collect(),
            packed_waste: packed.packed_waste(),
            pad_to_max_waste: waste.pad_to_max_waste,
        },
    })
}

pub fn write_manifest(manifest: &PackingManifest, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let json = serde_json::to_string_pretty(manifest)?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}
