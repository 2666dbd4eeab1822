use serde::Serialize;

use super::{conform, write_file, EvalError};
use crate::autodiff::Tape;
use crate::model::{forward, ModelConfig, ModelParams};
use crate::par;
use crate::streams::{augment, Dataset};
use std::path::Path;

/// Directed influence `parent → child` with its averaged attention weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
    pub weight: f64,
}

/// Time-averaged attention between real labels.
///
/// `adjacency[k][q]` is the attention channel `k` pays to bank slots of label
/// `q`, summed over the `J` slots of each step and averaged over tokens,
/// divided by `J`. Entries lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionGraph {
    pub labels: Vec<String>,
    pub threshold: f64,
    pub tokens: usize,
    pub memory_depth: usize,
    pub adjacency: Vec<Vec<f64>>,
    /// Entries at or above the threshold, heaviest first.
    pub edges: Vec<Edge>,
}

impl AttentionGraph {
    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.edges.iter().any(|e| e.parent == parent && e.child == child)
    }

    /// Graphviz digraph with edges `parent -> child [weight="w"]`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph attention {\n");
        for (i, name) in self.labels.iter().enumerate() {
            out.push_str(&format!("  {i} [label=\"{}\"];\n", name.replace('"', "\\\"")));
        }
        for e in &self.edges {
            out.push_str(&format!("  {} -> {} [weight=\"{:.4}\"];\n", e.parent, e.child, e.weight));
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes") + "\n"
    }

    pub fn save_dot(&self, path: &Path) -> Result<(), EvalError> {
        write_file(path, &self.to_dot())
    }

    pub fn save_json(&self, path: &Path) -> Result<(), EvalError> {
        write_file(path, &self.to_json())
    }
}

/// Averages the recorded attention over every rate-producing token of every
/// stream and keeps entries `≥ threshold` as edges.
pub fn attention_graph(
    params: &ModelParams,
    config: &ModelConfig,
    data: &Dataset,
    threshold: f64,
    workers: usize,
) -> Result<AttentionGraph, EvalError> {
    let m = config.label_count;
    let depth = config.memory_depth;
    if depth == 0 {
        return Err(EvalError::AttentionDisabled);
    }
    let partial = par::map(workers, data.streams(), |_, s| -> Result<(Vec<f64>, usize), EvalError> {
        let s = conform(s, m)?;
        let seq = augment(&s, config.fake_count);
        let mut tape = Tape::new();
        let pass = forward(&mut tape, params, config, &seq)?;
        let mut sums = vec![0.0; m * m];
        for rec in &pass.attention {
            for (k, alpha) in rec.alpha.iter().enumerate().take(m) {
                for (slot, a) in rec.slots.iter().zip(alpha) {
                    sums[k * m + slot.label] += a;
                }
            }
        }
        Ok((sums, pass.attention.len()))
    });
    let mut sums = vec![0.0; m * m];
    let mut tokens = 0;
    for p in partial {
        let (s, n) = p?;
        sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        tokens += n;
    }
    let norm = if tokens == 0 { 0.0 } else { 1.0 / (tokens as f64 * depth as f64) };
    let adjacency: Vec<Vec<f64>> = (0..m).map(|k| (0..m).map(|q| sums[k * m + q] * norm).collect()).collect();
    let mut edges: Vec<Edge> = (0..m)
        .flat_map(|k| (0..m).map(move |q| (k, q)))
        .filter(|&(k, q)| adjacency[k][q] >= threshold)
        .map(|(k, q)| Edge { parent: q, child: k, weight: adjacency[k][q] })
        .collect();
    edges.sort_by(|a, b| b.weight.total_cmp(&a.weight).then((a.child, a.parent).cmp(&(b.child, b.parent))));
    let labels = match data.label_names() {
        Some(names) if names.len() == m => names.to_vec(),
        _ => (0..m).map(|i| i.to_string()).collect(),
    };
    Ok(AttentionGraph { labels, threshold, tokens, memory_depth: depth, adjacency, edges })
}
