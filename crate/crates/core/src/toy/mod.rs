//! A small pre-norm RoPE decoder with a controllable vision/text norm skew,
//! instrumented so every probe can run on its forward passes.

mod model;
mod pipeline;
mod tokenizer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rope::{Pairing, RopeConfig, DEFAULT_ROPE_BASE};

pub use model::{ForwardRecord, HeadRecord, ToyModel};
pub use pipeline::{
    evaluate, exact_scorer, ConstantPipeline, GoldPipeline, GridReadout, Pipeline, ToyPipeline,
};
pub use tokenizer::{Tokenizer, PAD, SYS, UNK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub vocab: usize,
    pub n_vision: usize,
    pub n_text: usize,
    pub n_system: usize,
    /// Mean vision-row L2 norm divided by the text-row norm at the input.
    pub vision_norm_skew: f64,
    pub seed: u64,
    pub rope_base: f64,
    pub pairing: Pairing,
    /// Width of the raw per-patch vision features fed to the projector.
    pub vision_feature_dim: usize,
    pub mlp_hidden: usize,
    /// Multiplier on the attention and MLP output projections.
    pub update_scale: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            heads: 4,
            head_dim: 16,
            vocab: 64,
            n_vision: 36,
            n_text: 12,
            n_system: 8,
            vision_norm_skew: 1.0,
            seed: 0,
            rope_base: DEFAULT_ROPE_BASE,
            pairing: Pairing::Interleaved,
            vision_feature_dim: 192,
            mlp_hidden: 128,
            update_scale: 1.0,
        }
    }
}

impl ToyConfig {
    pub fn model_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn seq_len(&self) -> usize {
        self.n_system + self.n_vision + self.n_text
    }

    pub fn rope(&self) -> Result<RopeConfig> {
        RopeConfig::with_pairing(self.head_dim, self.rope_base, self.pairing)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.heads == 0 || self.n_vision == 0 || self.n_text == 0 || self.mlp_hidden == 0 {
            return bad("heads, n_vision, n_text and mlp_hidden must be >= 1".into());
        }
        if self.vision_feature_dim == 0 {
            return bad("vision_feature_dim must be >= 1".into());
        }
        let tokens = Tokenizer::default().len();
        if self.vocab < tokens {
            return bad(format!("vocab {} is smaller than the {tokens}-word tokenizer", self.vocab));
        }
        if !(self.vision_norm_skew >= 1.0) || !self.vision_norm_skew.is_finite() {
            return bad(format!("vision_norm_skew must be >= 1, got {}", self.vision_norm_skew));
        }
        if !(self.update_scale > 0.0) || !self.update_scale.is_finite() {
            return bad(format!("update_scale must be > 0, got {}", self.update_scale));
        }
        if !self.model_dim().is_multiple_of(2) {
            return bad("model_dim must be even".into());
        }
        self.rope()?;
        Ok(())
    }
}
