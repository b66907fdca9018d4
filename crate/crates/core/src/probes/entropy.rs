//! Normalised entropy of attention restricted to vision tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{TokenGroup, TokenPartition};
use crate::rope::AttentionRow;
use crate::trace::AttentionTrace;

/// Shannon entropy (nats) of a vision-only distribution divided by `ln |V|`.
/// `|V| = 1` gives 0.
fn normalized_entropy(vision_weights: &[f64]) -> Result<f64> {
    let mass: f64 = vision_weights.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::Probe("zero attention mass on vision tokens".into()));
    }
    if vision_weights.len() < 2 {
        return Ok(0.0);
    }
    let h: f64 = vision_weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / mass;
            -p * p.ln()
        })
        .sum();
    if h <= 0.0 {
        return Ok(0.0);
    }
    Ok((h / (vision_weights.len() as f64).ln()).min(1.0))
}

pub fn attention_entropy(attn: &AttentionRow, partition: &TokenPartition) -> Result<f64> {
    partition.check_len(attn.len(), "attention row")?;
    partition.require_vision()?;
    let w: Vec<f64> = partition.vision().iter().map(|&i| attn.weights[i]).collect();
    normalized_entropy(&w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMode {
    /// Average the text queries' attention rows first, then take the entropy.
    #[default]
    AveragedRows,
    /// Entropy of each text query's row, then averaged.
    PerRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTable {
    pub mode: EntropyMode,
    /// `[layer][head]` normalised entropy.
    pub per_head: Vec<Vec<f64>>,
    pub per_layer: Vec<f64>,
    /// Mean over every layer and head.
    pub overall: f64,
}

/// Vision-attention entropy of the captured text queries (all captured steps
/// when none of them is a text token), for every layer and head.
pub fn entropy_table(trace: &AttentionTrace, partition: &TokenPartition, mode: EntropyMode) -> Result<EntropyTable> {
    if trace.is_empty() {
        return Err(Error::EmptyInput);
    }
    partition.check_len(trace.seq_len(), "trace")?;
    partition.require_vision()?;
    let mut steps: Vec<usize> = trace
        .query_steps()
        .iter()
        .enumerate()
        .filter(|(_, &s)| partition.group_of(s) == Some(TokenGroup::Text))
        .map(|(i, _)| i)
        .collect();
    if steps.is_empty() {
        steps = (0..trace.query_steps().len()).collect();
    }
    let vision = partition.vision();
    let mut per_head = Vec::with_capacity(trace.layers());
    for layer in 0..trace.layers() {
        let mut row = Vec::with_capacity(trace.heads());
        for head in 0..trace.heads() {
            let att = &trace.head(layer, head).attention;
            let value = match mode {
                EntropyMode::AveragedRows => {
                    let mut avg = vec![0.0; vision.len()];
                    for &s in &steps {
                        for (a, &v) in avg.iter_mut().zip(vision) {
                            *a += att[(s, v)];
                        }
                    }
                    normalized_entropy(&avg)?
                }
                EntropyMode::PerRow => {
                    let mut sum = 0.0;
                    for &s in &steps {
                        let w: Vec<f64> = vision.iter().map(|&v| att[(s, v)]).collect();
                        sum += normalized_entropy(&w)?;
                    }
                    sum / steps.len() as f64
                }
            };
            row.push(value);
        }
        per_head.push(row);
    }
    let per_layer: Vec<f64> = per_head
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len().max(1) as f64)
        .collect();
    let overall = per_layer.iter().sum::<f64>() / per_layer.len().max(1) as f64;
    Ok(EntropyTable {
        mode,
        per_head,
        per_layer,
        overall,
    })
}
