//! Measurement probes: position sensitivity, cross-modality balance, RoPE
//! phase sensitivity, vision-attention entropy and hidden-norm profiles.

mod cmb;
mod entropy;
mod lemma;
mod norms;
mod psi;
mod sensitivity;

pub use cmb::{attention_share, cmb_head, cmb_heatmap, AttentionShare, CmbAccumulator, CmbHeatmap, StepAggregation};
pub use entropy::{attention_entropy, entropy_table, EntropyMode, EntropyTable};
pub use lemma::residual_phase_sensitivity;
pub use norms::{norm_profile, LayerNorms, NormProfile};
pub use psi::{measure_psi, permute_vision_tokens, psi, AccuracyEvaluator, PsiReport, VisionOrder};
pub use sensitivity::{
    group_derivative, group_derivative_analytic, rope_probe, rope_sensitivity_curve, single_key_derivative,
    GroupDerivative, RopeCurve, RopeLayerStats, RopeProbeResult,
};

pub use crate::partition::{TokenGroup, TokenPartition};
