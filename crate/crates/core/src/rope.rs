//! Rotary positional embedding, single-head scaled dot-product attention and
//! the analytic phase derivative of attention logits.
//!
//! Positions are continuous. Shifting a key by `delta` positions rotates each
//! of its 2D pairs by `delta * omega_i`; the derivative of a logit with
//! respect to that shift is obtained by applying the rotation generator
//! (block-diagonal `[[0, -omega_i], [omega_i, 0]]`) to the rotated key.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, softmax, Matrix};

pub const DEFAULT_ROPE_BASE: f64 = 10_000.0;

/// How coordinates are grouped into rotation pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Pairs `(2i, 2i + 1)`.
    #[default]
    Interleaved,
    /// Pairs `(i, i + d/2)`, the "rotate half" layout used by many checkpoints.
    HalfSplit,
}

impl Pairing {
    pub const SUPPORTED: &'static [&'static str] = &["interleaved", "half-split"];

    pub fn as_str(self) -> &'static str {
        match self {
            Pairing::Interleaved => "interleaved",
            Pairing::HalfSplit => "half-split",
        }
    }

    #[inline]
    pub(crate) fn pair(self, i: usize, half: usize) -> (usize, usize) {
        match self {
            Pairing::Interleaved => (2 * i, 2 * i + 1),
            Pairing::HalfSplit => (i, i + half),
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interleaved" => Ok(Pairing::Interleaved),
            "half-split" => Ok(Pairing::HalfSplit),
            other => Err(Error::UnknownPairing {
                found: other.to_string(),
                supported: Pairing::SUPPORTED.join(", "),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    head_dim: usize,
    base: f64,
    #[serde(default)]
    pairing: Pairing,
}

impl RopeConfig {
    pub fn new(head_dim: usize, base: f64) -> Result<Self> {
        Self::with_pairing(head_dim, base, Pairing::Interleaved)
    }

    pub fn with_pairing(head_dim: usize, base: f64, pairing: Pairing) -> Result<Self> {
        if head_dim < 2 || !head_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "rope head_dim must be even and >= 2, got {head_dim}"
            )));
        }
        if !(base > 1.0) || !base.is_finite() {
            return Err(Error::InvalidConfig(format!("rope base must be > 1, got {base}")));
        }
        Ok(Self {
            head_dim,
            base,
            pairing,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing
    }

    /// `omega_i = base^(-2i/head_dim)` for `i < head_dim/2`.
    pub fn frequencies(&self) -> Vec<f64> {
        let d = self.head_dim as f64;
        (0..self.head_dim / 2)
            .map(|i| self.base.powf(-2.0 * i as f64 / d))
            .collect()
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::dims(format!("{what} has odd length {}", v.len())));
        }
        if v.len() != self.head_dim {
            return Err(Error::dims(format!(
                "{what} has length {}, head_dim is {}",
                v.len(),
                self.head_dim
            )));
        }
        Ok(())
    }
}

/// Rotates every pair of `v` by `position * omega_i`.
pub fn rope_rotate(v: &[f64], position: f64, cfg: &RopeConfig) -> Result<Vec<f64>> {
    cfg.check_len(v, "vector")?;
    let mut out = v.to_vec();
    rotate_in_place(&mut out, position, cfg);
    Ok(out)
}

pub(crate) fn rotate_in_place(v: &mut [f64], position: f64, cfg: &RopeConfig) {
    let half = cfg.head_dim / 2;
    for (i, w) in cfg.frequencies().into_iter().enumerate() {
        let (a, b) = cfg.pairing.pair(i, half);
        let (s, c) = (position * w).sin_cos();
        let (x, y) = (v[a], v[b]);
        v[a] = c * x - s * y;
        v[b] = s * x + c * y;
    }
}

/// Applies the rotation generator: each pair `(x, y)` maps to `(-omega y, omega x)`.
pub fn apply_generator(v: &[f64], cfg: &RopeConfig) -> Result<Vec<f64>> {
    cfg.check_len(v, "vector")?;
    let half = cfg.head_dim / 2;
    let mut out = vec![0.0; v.len()];
    for (i, w) in cfg.frequencies().into_iter().enumerate() {
        let (a, b) = cfg.pairing.pair(i, half);
        out[a] = -w * v[b];
        out[b] = w * v[a];
    }
    Ok(out)
}

fn check_keys(keys: &Matrix, k_positions: &[f64], cfg: &RopeConfig) -> Result<()> {
    if keys.cols() != cfg.head_dim {
        return Err(Error::dims(format!(
            "keys have width {}, head_dim is {}",
            keys.cols(),
            cfg.head_dim
        )));
    }
    if keys.rows() != k_positions.len() {
        return Err(Error::dims(format!(
            "{} keys but {} positions",
            keys.rows(),
            k_positions.len()
        )));
    }
    Ok(())
}

/// `l_j = <R(q_pos) q, R(pos_j) k_j> / sqrt(d)` for every key row.
pub fn attention_logits(
    q: &[f64],
    keys: &Matrix,
    q_pos: f64,
    k_positions: &[f64],
    cfg: &RopeConfig,
) -> Result<Vec<f64>> {
    cfg.check_len(q, "query")?;
    check_keys(keys, k_positions, cfg)?;
    let scale = (cfg.head_dim as f64).sqrt().recip();
    let q_rot = rope_rotate(q, q_pos, cfg)?;
    let mut k_rot = vec![0.0; cfg.head_dim];
    Ok(keys
        .iter_rows()
        .zip(k_positions)
        .map(|(k, &p)| {
            k_rot.copy_from_slice(k);
            rotate_in_place(&mut k_rot, p, cfg);
            dot(&q_rot, &k_rot) * scale
        })
        .collect())
}

/// Attention weights for one query against all keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub weights: Vec<f64>,
    pub query_pos: usize,
    /// Keys at indices `>= mask` are masked out.
    pub mask: usize,
}

impl AttentionRow {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Wraps externally captured weights for a query at `query_pos`; the
    /// causal boundary is `query_pos + 1`, clamped to the row length.
    pub fn from_weights(weights: Vec<f64>, query_pos: usize) -> Self {
        let mask = (query_pos + 1).min(weights.len());
        Self {
            weights,
            query_pos,
            mask,
        }
    }
}

/// Softmax over `logits[..causal_boundary]`; masked entries are exactly zero.
pub fn attention_weights(logits: &[f64], causal_boundary: usize) -> Result<AttentionRow> {
    if causal_boundary == 0 {
        return Err(Error::NoAttendableKeys);
    }
    if causal_boundary > logits.len() {
        return Err(Error::IndexOutOfRange {
            index: causal_boundary,
            len: logits.len(),
        });
    }
    let mut weights = softmax(&logits[..causal_boundary])?;
    weights.resize(logits.len(), 0.0);
    Ok(AttentionRow {
        weights,
        query_pos: causal_boundary - 1,
        mask: causal_boundary,
    })
}

/// Adds `delta` to the positions of the keys in `shift_set`.
///
/// Keys are stored unrotated, so only the position list changes; the key
/// matrix is returned as-is alongside it.
pub fn phase_shift_keys(
    keys: &Matrix,
    k_positions: &[f64],
    shift_set: &[usize],
    delta: f64,
) -> Result<(Matrix, Vec<f64>)> {
    if keys.rows() != k_positions.len() {
        return Err(Error::dims(format!(
            "{} keys but {} positions",
            keys.rows(),
            k_positions.len()
        )));
    }
    let mut positions = k_positions.to_vec();
    for &i in shift_set {
        let p = positions.get_mut(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: k_positions.len(),
        })?;
        *p += delta;
    }
    Ok((keys.clone(), positions))
}

/// d/dphi of `<q', R(phi) k'> / sqrt(d)` at `phi = 0`, where `q'`, `k'` are
/// the rotated query and key.
pub fn logit_phase_derivative(
    q: &[f64],
    key: &[f64],
    q_pos: f64,
    k_pos: f64,
    cfg: &RopeConfig,
) -> Result<f64> {
    cfg.check_len(q, "query")?;
    cfg.check_len(key, "key")?;
    let q_rot = rope_rotate(q, q_pos, cfg)?;
    let k_rot = rope_rotate(key, k_pos, cfg)?;
    Ok(rotated_derivative(&q_rot, &k_rot, cfg))
}

/// Same as [`logit_phase_derivative`] for already-rotated vectors.
pub(crate) fn rotated_derivative(q_rot: &[f64], k_rot: &[f64], cfg: &RopeConfig) -> f64 {
    let half = cfg.head_dim / 2;
    let mut acc = 0.0;
    for (i, w) in cfg.frequencies().into_iter().enumerate() {
        let (a, b) = cfg.pairing.pair(i, half);
        // <q, G k> with G k = (-w k_b, w k_a)
        acc += w * (q_rot[b] * k_rot[a] - q_rot[a] * k_rot[b]);
    }
    acc / (cfg.head_dim as f64).sqrt()
}

/// Phase derivatives of every logit, with `perturbed[j]` selecting which keys
/// move with the phase (others contribute a zero derivative).
pub fn logit_phase_derivatives(
    q: &[f64],
    keys: &Matrix,
    q_pos: f64,
    k_positions: &[f64],
    perturbed: &[bool],
    cfg: &RopeConfig,
) -> Result<Vec<f64>> {
    cfg.check_len(q, "query")?;
    check_keys(keys, k_positions, cfg)?;
    if perturbed.len() != keys.rows() {
        return Err(Error::dims(format!(
            "perturbation mask of length {} for {} keys",
            perturbed.len(),
            keys.rows()
        )));
    }
    let q_rot = rope_rotate(q, q_pos, cfg)?;
    let mut k_rot = vec![0.0; cfg.head_dim];
    Ok(keys
        .iter_rows()
        .zip(k_positions)
        .zip(perturbed)
        .map(|((k, &p), &moves)| {
            if !moves {
                return 0.0;
            }
            k_rot.copy_from_slice(k);
            rotate_in_place(&mut k_rot, p, cfg);
            rotated_derivative(&q_rot, &k_rot, cfg)
        })
        .collect())
}
