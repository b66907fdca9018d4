//! Toolkit for measuring how multimodal decoders use the spatial order of
//! vision tokens.
//!
//! - [`probes`]: position sensitivity index, cross-modality balance, RoPE
//!   phase sensitivity, attention entropy and hidden-norm profiles.
//! - [`interventions`]: vision-embedding RMS matching, multilayer feature
//!   concatenation and average-pool token compression.
//! - [`toy`]: a small instrumented pre-norm RoPE decoder with a controllable
//!   vision/text norm skew.
//! - [`scene2ds`]: the synthetic 2D spatial benchmark (scenes, rendering,
//!   questions, answer oracle, scoring).
//! - [`trace_io`]: the binary trace format and report emission.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod interventions;
pub mod partition;
pub mod probes;
pub mod rope;
pub mod scene2ds;
pub mod tensor;
pub mod toy;
pub mod trace_io;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
pub use partition::{TokenGroup, TokenPartition};
pub use rope::{AttentionRow, Pairing, RopeConfig};
pub use tensor::Matrix;
pub use trace::{AttentionTrace, HeadTrace, ProbeInput};
