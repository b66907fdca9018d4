//! Layer-wise hidden-state norms for vision and text tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::TokenPartition;
use crate::tensor::{l2_norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerNorms {
    pub layer: usize,
    pub vision_mean: f64,
    pub text_mean: f64,
    /// `vision_mean / text_mean`; `None` when the text mean is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormProfile {
    pub layers: Vec<LayerNorms>,
}

impl NormProfile {
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.layers.iter().map(|l| l.ratio).collect()
    }
}

fn mean_norm(m: &Matrix, rows: &[usize]) -> f64 {
    rows.iter().map(|&i| l2_norm(m.row(i))).sum::<f64>() / rows.len() as f64
}

/// Mean L2 norm of vision rows and of text rows at each layer. System-prompt
/// rows are left out.
pub fn norm_profile(hidden_states: &[Matrix], partition: &TokenPartition) -> Result<NormProfile> {
    if partition.vision().is_empty() || partition.text().is_empty() {
        return Err(Error::InvalidPartition(
            "norm profile needs nonempty vision and text groups".into(),
        ));
    }
    let layers = hidden_states
        .iter()
        .enumerate()
        .map(|(layer, h)| {
            partition.check_len(h.rows(), &format!("hidden states of layer {layer}"))?;
            let vision_mean = mean_norm(h, partition.vision());
            let text_mean = mean_norm(h, partition.text());
            Ok(LayerNorms {
                layer,
                vision_mean,
                text_mean,
                ratio: (text_mean > 0.0).then(|| vision_mean / text_mean),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormProfile { layers })
}
