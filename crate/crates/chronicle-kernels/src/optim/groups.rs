//! LoRA+ parameter grouping: adapter `B` matrices train with a learning
//! rate (and weight decay) `ratio`× that of `A` matrices, compensating the
//! gradient-flow asymmetry of the `B = 0` initialization. Everything else
//! keeps the base hyperparameters.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupLabel {
    LoraA,
    LoraB,
    Other,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamGroup {
    pub label: GroupLabel,
    /// Indices into the caller's parameter list.
    pub members: Vec<usize>,
    pub names: Vec<String>,
    pub lr: f64,
    pub weight_decay: f64,
}

fn is_lora_a(name: &str) -> bool {
    name.contains("lora_A") || name.ends_with(".A") || name.ends_with("_A")
}

fn is_lora_b(name: &str) -> bool {
    name.contains("lora_B") || name.ends_with(".B") || name.ends_with("_B")
}

/// Partition named parameters into the three LoRA+ groups. Every parameter
/// lands in exactly one group; `lora_B` gets `lr·ratio` and `wd·ratio`.
pub fn build_lora_plus_groups(
    names: &[String],
    base_lr: f64,
    ratio: f64,
    weight_decay: f64,
) -> Vec<ParamGroup> {
    let mut a = ParamGroup {
        label: GroupLabel::LoraA,
        members: Vec::new(),
        names: Vec::new(),
        lr: base_lr,
        weight_decay,
    };
    let mut b = ParamGroup {
        label: GroupLabel::LoraB,
        members: Vec::new(),
        names: Vec::new(),
        lr: base_lr * ratio,
        weight_decay: weight_decay * ratio,
    };
    let mut other = ParamGroup {
        label: GroupLabel::Other,
        members: Vec::new(),
        names: Vec::new(),
        lr: base_lr,
        weight_decay,
    };
    for (i, name) in names.iter().enumerate() {
        let bucket = if is_lora_a(name) {
            &mut a
        } else if is_lora_b(name) {
            &mut b
        } else {
            &mut other
        };
        bucket.members.push(i);
        bucket.names.push(name.clone());
    }
    vec![a, b, other]
}

/// Per-parameter `(lr, weight_decay)` resolved through the groups.
pub fn resolve_hyper(groups: &[ParamGroup], index: usize) -> Option<(f64, f64)> {
    groups
        .iter()
        .find(|g| g.members.contains(&index))
        .map(|g| (g.lr, g.weight_decay))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::assert_close;

    #[test]
    fn pattern_routing() {
        let names: Vec<String> = [
            "layers.0.q.lora_A.weight",
            "layers.0.q.lora_B.weight",
            "embed_tokens.weight",
            "layers.1.mlp.gate.lora_A.weight",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let groups = build_lora_plus_groups(&names, 1e-4, 16.0, 0.01);
        assert_eq!(groups[0].members, vec![0, 3]);
        assert_eq!(groups[1].members, vec![1]);
        assert_eq!(groups[2].members, vec![2]);
        assert_close(groups[0].lr, 1e-4, 1e-18);
        assert_close(groups[1].lr, 1.6e-3, 1e-18);
        assert_close(groups[1].weight_decay, 0.16, 1e-15);
        assert_close(groups[2].lr, 1e-4, 1e-18);
    }

    #[test]
    fn partition_total_and_disjoint() {
        let names: Vec<String> = (0..20)
            .map(|i| match i % 3 {
                0 => format!("l.{i}.lora_A"),
                1 => format!("l.{i}.lora_B"),
                _ => format!("l.{i}.base"),
            })
            .collect();
        let groups = build_lora_plus_groups(&names, 1e-4, 16.0, 0.01);
        let mut seen: Vec<usize> = groups.iter().flat_map(|g| g.members.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn suffix_patterns_match() {
        let names: Vec<String> = ["adapter.A", "adapter.B", "adapter_A", "adapter_B", "plain"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let groups = build_lora_plus_groups(&names, 1.0, 2.0, 0.0);
        assert_eq!(groups[0].members, vec![0, 2]);
        assert_eq!(groups[1].members, vec![1, 3]);
        assert_eq!(groups[2].members, vec![4]);
    }

    #[test]
    fn resolve_lookup() {
        let names: Vec<String> = ["x.lora_B", "y"].iter().map(|s| s.to_string()).collect();
        let groups = build_lora_plus_groups(&names, 1e-4, 16.0, 0.01);
        let (lr, wd) = resolve_hyper(&groups, 0).unwrap();
        assert_close(lr, 1.6e-3, 1e-18);
        assert_close(wd, 0.16, 1e-15);
        let (lr, _) = resolve_hyper(&groups, 1).unwrap();
        assert_close(lr, 1e-4, 1e-18);
    }
}
