//! In-memory attention capture: unrotated queries/keys and attention rows for
//! every layer and head at a set of query steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rope::AttentionRow;
use crate::tensor::Matrix;

/// One head's capture. Queries and attention rows are indexed by query step,
/// keys by sequence position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTrace {
    pub queries: Matrix,
    pub keys: Matrix,
    pub attention: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    layers: usize,
    heads: usize,
    head_dim: usize,
    /// RoPE position of every sequence slot.
    positions: Vec<f64>,
    /// Sequence index of each captured query.
    query_steps: Vec<usize>,
    /// Layer-major: `layer * heads + head`.
    captures: Vec<HeadTrace>,
}

/// A single query with the keys it can attend to.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeInput {
    pub query: Vec<f64>,
    pub q_pos: f64,
    pub keys: Matrix,
    pub key_positions: Vec<f64>,
}

impl ProbeInput {
    pub fn len(&self) -> usize {
        self.keys.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.rows() == 0
    }
}

impl AttentionTrace {
    pub fn new(
        layers: usize,
        heads: usize,
        head_dim: usize,
        positions: Vec<f64>,
        query_steps: Vec<usize>,
        captures: Vec<HeadTrace>,
    ) -> Result<Self> {
        let seq_len = positions.len();
        if captures.len() != layers * heads {
            return Err(Error::ShapeInconsistency(format!(
                "{} head captures for {layers} layers x {heads} heads",
                captures.len()
            )));
        }
        if let Some(&s) = query_steps.iter().find(|&&s| s >= seq_len) {
            return Err(Error::ShapeInconsistency(format!(
                "query step {s} outside sequence of length {seq_len}"
            )));
        }
        let steps = query_steps.len();
        for (i, c) in captures.iter().enumerate() {
            let expect = [
                ("queries", c.queries.shape(), (steps, head_dim)),
                ("keys", c.keys.shape(), (seq_len, head_dim)),
                ("attention", c.attention.shape(), (steps, seq_len)),
            ];
            for (what, got, want) in expect {
                if got != want {
                    return Err(Error::ShapeInconsistency(format!(
                        "capture {i} {what} is {got:?}, expected {want:?}"
                    )));
                }
            }
        }
        Ok(Self {
            layers,
            heads,
            head_dim,
            positions,
            query_steps,
            captures,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn seq_len(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn query_steps(&self) -> &[usize] {
        &self.query_steps
    }

    pub fn captures(&self) -> &[HeadTrace] {
        &self.captures
    }

    pub fn is_empty(&self) -> bool {
        self.captures.is_empty() || self.query_steps.is_empty()
    }

    pub fn head(&self, layer: usize, head: usize) -> &HeadTrace {
        &self.captures[layer * self.heads + head]
    }

    /// Attention row of `(layer, head)` at the `step`-th captured query.
    pub fn row(&self, layer: usize, head: usize, step: usize) -> AttentionRow {
        let weights = self.head(layer, head).attention.row(step).to_vec();
        AttentionRow::from_weights(weights, self.query_steps[step])
    }

    /// The query at `step` with the keys up to and including its own position.
    pub fn probe_input(&self, layer: usize, head: usize, step: usize) -> ProbeInput {
        let cap = self.head(layer, head);
        let pos = self.query_steps[step];
        let boundary = pos + 1;
        let keys = Matrix::from_vec(
            boundary,
            self.head_dim,
            cap.keys.as_slice()[..boundary * self.head_dim].to_vec(),
        )
        .expect("key rows validated at construction");
        ProbeInput {
            query: cap.queries.row(step).to_vec(),
            q_pos: self.positions[pos],
            keys,
            key_positions: self.positions[..boundary].to_vec(),
        }
    }
}
