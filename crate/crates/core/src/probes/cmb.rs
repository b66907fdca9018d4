//! Cross-modality balance per head and modality attention shares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{TokenGroup, TokenPartition};
use crate::rope::AttentionRow;
use crate::tensor::Matrix;
use crate::trace::AttentionTrace;

/// Fraction of a head's modality mass that lands on vision tokens.
///
/// With `include_system = false` the denominator is vision + text only, so
/// the system prompt drops out entirely. With `true` it also counts the
/// system mass; the numerator is vision-only either way.
pub fn cmb_head(attn: &AttentionRow, partition: &TokenPartition, include_system: bool) -> Result<f64> {
    partition.check_len(attn.len(), "attention row")?;
    let w = &attn.weights;
    let vision = partition.mass(TokenGroup::Vision, w);
    let mut denom = vision + partition.mass(TokenGroup::Text, w);
    if include_system {
        denom += partition.mass(TokenGroup::System, w);
    }
    if !(denom > 0.0) {
        return Err(Error::NoModalityMass);
    }
    Ok((vision / denom).clamp(0.0, 1.0))
}

/// Which captured query steps feed an aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepAggregation {
    /// Only the first captured query step (the first decoding step).
    #[default]
    FirstStep,
    AllSteps,
}

impl StepAggregation {
    pub(crate) fn steps(self, trace: &AttentionTrace) -> std::ops::Range<usize> {
        match self {
            StepAggregation::FirstStep => 0..trace.query_steps().len().min(1),
            StepAggregation::AllSteps => 0..trace.query_steps().len(),
        }
    }
}

/// Running per-cell mean stored as `(sum, count)` pairs so partial results
/// from different samples can be merged in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct CmbAccumulator {
    layers: usize,
    heads: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
    samples: u64,
    include_system: bool,
}

impl CmbAccumulator {
    pub fn new(layers: usize, heads: usize, include_system: bool) -> Self {
        Self {
            layers,
            heads,
            sums: vec![0.0; layers * heads],
            counts: vec![0; layers * heads],
            samples: 0,
            include_system,
        }
    }

    pub fn add(&mut self, layer: usize, head: usize, value: f64) {
        let i = layer * self.heads + head;
        self.sums[i] += value;
        self.counts[i] += 1;
    }

    /// Adds every layer/head cell of one captured sample.
    pub fn add_trace(
        &mut self,
        trace: &AttentionTrace,
        partition: &TokenPartition,
        steps: StepAggregation,
    ) -> Result<()> {
        if trace.layers() != self.layers || trace.heads() != self.heads {
            return Err(Error::dims(format!(
                "trace is {}x{}, heatmap is {}x{}",
                trace.layers(),
                trace.heads(),
                self.layers,
                self.heads
            )));
        }
        if trace.is_empty() {
            return Err(Error::EmptyInput);
        }
        for layer in 0..self.layers {
            for head in 0..self.heads {
                for step in steps.steps(trace) {
                    let v = cmb_head(&trace.row(layer, head, step), partition, self.include_system)?;
                    self.add(layer, head, v);
                }
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &CmbAccumulator) -> Result<()> {
        if (self.layers, self.heads, self.include_system)
            != (other.layers, other.heads, other.include_system)
        {
            return Err(Error::dims("merging incompatible CMB accumulators"));
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.samples += other.samples;
        Ok(())
    }

    pub fn finish(&self) -> CmbHeatmap {
        let values = Matrix::from_fn(self.layers, self.heads, |l, h| {
            let i = l * self.heads + h;
            if self.counts[i] == 0 {
                0.0
            } else {
                (self.sums[i] / self.counts[i] as f64).clamp(0.0, 1.0)
            }
        });
        CmbHeatmap {
            values,
            include_system: self.include_system,
            samples: self.samples,
        }
    }
}

/// Layers x heads grid of mean CMB values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmbHeatmap {
    pub values: Matrix,
    pub include_system: bool,
    pub samples: u64,
}

pub fn cmb_heatmap(
    trace: &AttentionTrace,
    partition: &TokenPartition,
    include_system: bool,
    steps: StepAggregation,
) -> Result<CmbHeatmap> {
    let mut acc = CmbAccumulator::new(trace.layers(), trace.heads(), include_system);
    acc.add_trace(trace, partition, steps)?;
    Ok(acc.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionShare {
    pub system: f64,
    pub vision: f64,
    pub text: f64,
}

/// Mean share of attention on system / vision / text tokens over every
/// layer, head and captured query step. Each row is first normalised over the
/// three groups.
pub fn attention_share(trace: &AttentionTrace, partition: &TokenPartition) -> Result<AttentionShare> {
    if trace.is_empty() {
        return Err(Error::EmptyInput);
    }
    partition.check_len(trace.seq_len(), "trace")?;
    let (mut s, mut v, mut t, mut n) = (0.0, 0.0, 0.0, 0usize);
    for cap in trace.captures() {
        for row in cap.attention.iter_rows() {
            let ms = partition.mass(TokenGroup::System, row);
            let mv = partition.mass(TokenGroup::Vision, row);
            let mt = partition.mass(TokenGroup::Text, row);
            let total = ms + mv + mt;
            if total > 0.0 {
                s += ms / total;
                v += mv / total;
                t += mt / total;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::NoModalityMass);
    }
    let n = n as f64;
    Ok(AttentionShare {
        system: s / n,
        vision: v / n,
        text: t / n,
    })
}
