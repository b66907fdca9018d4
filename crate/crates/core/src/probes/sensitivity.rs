//! RoPE phase sensitivity of attention.
//!
//! For one query, the vision keys are moved by an extra phase and the
//! response of the vision attention mass `alpha_V` is measured, both as a
//! finite shift and analytically. With logits `l`, weights `a` and phase
//! derivatives `dl`, the vision mass responds as
//!
//! ```text
//! d alpha_V / d phi = alpha_V * alpha_T * (g_V - g_T)
//! g_G = sum_{j in G} (a_j / alpha_G) * dl_j
//! ```
//!
//! where the "text" group `T` is every attendable key outside `V` (system
//! prompt included), so `alpha_T = 1 - alpha_V`. When only vision keys move,
//! `g_T = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{TokenGroup, TokenPartition};
use crate::rope::{attention_logits, logit_phase_derivatives, phase_shift_keys, RopeConfig};
use crate::tensor::softmax;
use crate::trace::{AttentionTrace, ProbeInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeProbeResult {
    pub alpha_v_base: f64,
    pub alpha_v_shifted: f64,
    pub delta_alpha_v: f64,
    /// Analytic attention-weighted mean phase derivative of the vision logits.
    pub g_v: f64,
    /// Attention-weighted mean change of the vision logits under the shift.
    pub delta_g_v: f64,
    /// `alpha_V (1 - alpha_V)`.
    pub balance_factor: f64,
}

fn membership(indices: &[usize], len: usize) -> Result<Vec<bool>> {
    let mut m = vec![false; len];
    for &i in indices {
        *m.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, len })? = true;
    }
    Ok(m)
}

/// Group masses and derivative terms for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupDerivative {
    pub alpha_v: f64,
    pub alpha_t: f64,
    pub g_v: f64,
    /// `None` when the complement group carries no mass.
    pub g_t: Option<f64>,
    /// `alpha_V alpha_T (g_V - g_T)`.
    pub d_alpha_v: f64,
}

/// Analytic `d alpha_V / d phi` with an arbitrary set of keys moving with the
/// phase. `vision` and `perturbed` index rows of `input.keys`.
pub fn group_derivative(
    input: &ProbeInput,
    vision: &[usize],
    perturbed: &[usize],
    cfg: &RopeConfig,
) -> Result<GroupDerivative> {
    let n = input.len();
    if n == 0 {
        return Err(Error::NoAttendableKeys);
    }
    if vision.is_empty() {
        return Err(Error::Probe("vision set is empty".into()));
    }
    let in_v = membership(vision, n)?;
    let moves = membership(perturbed, n)?;
    let logits = attention_logits(&input.query, &input.keys, input.q_pos, &input.key_positions, cfg)?;
    let alpha = softmax(&logits)?;
    let dl = logit_phase_derivatives(
        &input.query,
        &input.keys,
        input.q_pos,
        &input.key_positions,
        &moves,
        cfg,
    )?;
    let (mut alpha_v, mut alpha_t, mut s_v, mut s_t) = (0.0, 0.0, 0.0, 0.0);
    for j in 0..n {
        if in_v[j] {
            alpha_v += alpha[j];
            s_v += alpha[j] * dl[j];
        } else {
            alpha_t += alpha[j];
            s_t += alpha[j] * dl[j];
        }
    }
    if !(alpha_v > 0.0) {
        return Err(Error::Probe(
            "vision attention mass is zero; g_V is undefined".into(),
        ));
    }
    let g_v = s_v / alpha_v;
    let g_t = (alpha_t > 0.0).then(|| s_t / alpha_t);
    // alpha_V alpha_T (g_V - g_T), expanded so an empty complement is exact
    let d_alpha_v = alpha_t * s_v - alpha_v * s_t;
    Ok(GroupDerivative {
        alpha_v,
        alpha_t,
        g_v,
        g_t,
        d_alpha_v,
    })
}

/// `d alpha_V / d phi` when only the vision keys move; requires both a vision
/// and a non-vision key among the attendable ones.
pub fn group_derivative_analytic(input: &ProbeInput, vision: &[usize], cfg: &RopeConfig) -> Result<f64> {
    if vision.len() >= input.len() {
        return Err(Error::Probe("no non-vision keys to trade mass with".into()));
    }
    Ok(group_derivative(input, vision, vision, cfg)?.d_alpha_v)
}

/// `d alpha_k / d phi = alpha_k (dl_k - sum_j alpha_j dl_j)` for one key, with
/// the keys in `perturbed` moving with the phase.
pub fn single_key_derivative(
    input: &ProbeInput,
    key_index: usize,
    perturbed: &[usize],
    cfg: &RopeConfig,
) -> Result<f64> {
    let n = input.len();
    if key_index >= n {
        return Err(Error::IndexOutOfRange { index: key_index, len: n });
    }
    let moves = membership(perturbed, n)?;
    let logits = attention_logits(&input.query, &input.keys, input.q_pos, &input.key_positions, cfg)?;
    let alpha = softmax(&logits)?;
    let dl = logit_phase_derivatives(
        &input.query,
        &input.keys,
        input.q_pos,
        &input.key_positions,
        &moves,
        cfg,
    )?;
    let mean: f64 = alpha.iter().zip(&dl).map(|(a, d)| a * d).sum();
    Ok(alpha[key_index] * (dl[key_index] - mean))
}

/// Shifts the vision keys by `delta` positions and reports the change in
/// vision attention mass alongside its logit-level counterpart.
pub fn rope_probe(input: &ProbeInput, vision: &[usize], delta: f64, cfg: &RopeConfig) -> Result<RopeProbeResult> {
    if delta.is_nan() {
        return Err(Error::InvalidArgument("delta is NaN".into()));
    }
    let n = input.len();
    if n == 0 {
        return Err(Error::NoAttendableKeys);
    }
    if vision.is_empty() {
        return Err(Error::Probe("vision set is empty".into()));
    }
    let in_v = membership(vision, n)?;
    let base = attention_logits(&input.query, &input.keys, input.q_pos, &input.key_positions, cfg)?;
    let (_, shifted_pos) = phase_shift_keys(&input.keys, &input.key_positions, vision, delta)?;
    let shifted = attention_logits(&input.query, &input.keys, input.q_pos, &shifted_pos, cfg)?;
    let a0 = softmax(&base)?;
    let a1 = softmax(&shifted)?;
    let dl = logit_phase_derivatives(
        &input.query,
        &input.keys,
        input.q_pos,
        &input.key_positions,
        &in_v,
        cfg,
    )?;

    let (mut alpha_v_base, mut alpha_v_shifted, mut s_g, mut s_dg) = (0.0, 0.0, 0.0, 0.0);
    for j in (0..n).filter(|&j| in_v[j]) {
        alpha_v_base += a0[j];
        alpha_v_shifted += a1[j];
        s_g += a0[j] * dl[j];
        s_dg += a0[j] * (shifted[j] - base[j]);
    }
    if !(alpha_v_base > 0.0) {
        return Err(Error::Probe(
            "vision attention mass is zero; g_V is undefined".into(),
        ));
    }
    if vision.len() == n {
        // all mass is already on vision keys; it has nowhere to go
        alpha_v_shifted = alpha_v_base;
    }
    Ok(RopeProbeResult {
        alpha_v_base,
        alpha_v_shifted,
        delta_alpha_v: alpha_v_shifted - alpha_v_base,
        g_v: s_g / alpha_v_base,
        delta_g_v: s_dg / alpha_v_base,
        balance_factor: alpha_v_base * (1.0 - alpha_v_base),
    })
}

/// Per-layer means of the probe over heads (and query steps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopeCurve {
    pub delta: f64,
    pub layers: Vec<RopeLayerStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeLayerStats {
    pub layer: usize,
    pub alpha_v: f64,
    pub delta_alpha_v: f64,
    pub abs_delta_alpha_v: f64,
    pub g_v: f64,
    pub delta_g_v: f64,
    pub abs_delta_g_v: f64,
    pub samples: usize,
}

impl RopeCurve {
    /// Mean `|delta alpha_V|` over layers `[start, end)`.
    pub fn mean_abs_delta_alpha(&self, layers: std::ops::Range<usize>) -> f64 {
        let sel: Vec<f64> = self
            .layers
            .iter()
            .filter(|s| layers.contains(&s.layer))
            .map(|s| s.abs_delta_alpha_v)
            .collect();
        sel.iter().sum::<f64>() / sel.len().max(1) as f64
    }
}

pub fn rope_sensitivity_curve(
    trace: &AttentionTrace,
    partition: &TokenPartition,
    delta: f64,
    cfg: &RopeConfig,
    steps: super::StepAggregation,
) -> Result<RopeCurve> {
    if trace.is_empty() {
        return Err(Error::EmptyInput);
    }
    partition.check_len(trace.seq_len(), "trace")?;
    if cfg.head_dim() != trace.head_dim() {
        return Err(Error::dims(format!(
            "rope head_dim {} vs trace head_dim {}",
            cfg.head_dim(),
            trace.head_dim()
        )));
    }
    let mut layers = Vec::with_capacity(trace.layers());
    for layer in 0..trace.layers() {
        let mut acc = [0.0f64; 6];
        let mut samples = 0usize;
        for head in 0..trace.heads() {
            for step in steps.steps(trace) {
                let input = trace.probe_input(layer, head, step);
                let vision = partition.indices_below(TokenGroup::Vision, input.len());
                let r = rope_probe(&input, vision, delta, cfg)?;
                for (a, v) in acc.iter_mut().zip([
                    r.alpha_v_base,
                    r.delta_alpha_v,
                    r.delta_alpha_v.abs(),
                    r.g_v,
                    r.delta_g_v,
                    r.delta_g_v.abs(),
                ]) {
                    *a += v;
                }
                samples += 1;
            }
        }
        let n = samples.max(1) as f64;
        layers.push(RopeLayerStats {
            layer,
            alpha_v: acc[0] / n,
            delta_alpha_v: acc[1] / n,
            abs_delta_alpha_v: acc[2] / n,
            g_v: acc[3] / n,
            delta_g_v: acc[4] / n,
            abs_delta_g_v: acc[5] / n,
            samples,
        });
    }
    Ok(RopeCurve { delta, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rope::DEFAULT_ROPE_BASE;
    use crate::tensor::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng, d: usize, n: usize) -> ProbeInput {
        let query: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let keys = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let key_positions: Vec<f64> = (0..n).map(|i| i as f64).collect();
        ProbeInput {
            query,
            q_pos: n as f64,
            keys,
            key_positions,
        }
    }

    /// Vision mass with the perturbed keys moved by `phi`; the finite-difference oracle.
    fn alpha_v_at(input: &ProbeInput, vision: &[usize], perturbed: &[usize], phi: f64, cfg: &RopeConfig) -> f64 {
        let mut pos = input.key_positions.clone();
        for &i in perturbed {
            pos[i] += phi;
        }
        let l = attention_logits(&input.query, &input.keys, input.q_pos, &pos, cfg).unwrap();
        let a = softmax(&l).unwrap();
        vision.iter().map(|&v| a[v]).sum()
    }

    #[test]
    fn zero_delta_is_no_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = RopeConfig::new(8, DEFAULT_ROPE_BASE).unwrap();
        let input = random_input(&mut rng, 8, 10);
        let r = rope_probe(&input, &[2, 3, 4], 0.0, &cfg).unwrap();
        assert_eq!(r.delta_alpha_v, 0.0);
        assert_eq!(r.alpha_v_shifted, r.alpha_v_base);
        assert_eq!(r.delta_g_v, 0.0);
    }

    #[test]
    fn all_vision_keys_cannot_move_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = RopeConfig::new(8, DEFAULT_ROPE_BASE).unwrap();
        let input = random_input(&mut rng, 8, 5);
        for delta in [0.5, 1.0, 37.0] {
            let r = rope_probe(&input, &[0, 1, 2, 3, 4], delta, &cfg).unwrap();
            assert_eq!(r.delta_alpha_v, 0.0);
            assert_eq!(r.balance_factor, 0.0);
        }
    }

    #[test]
    fn empty_vision_and_zero_mass_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = RopeConfig::new(4, DEFAULT_ROPE_BASE).unwrap();
        let input = random_input(&mut rng, 4, 4);
        assert!(rope_probe(&input, &[], 1.0, &cfg).is_err());
        assert!(rope_probe(&input, &[0], f64::NAN, &cfg).is_err());
        // a vision key whose logit underflows the softmax entirely
        let mut input = ProbeInput {
            query: vec![1.0, 0.0, 0.0, 0.0],
            q_pos: 0.0,
            keys: Matrix::from_rows(&[[-2000.0, 0.0, 0.0, 0.0], [2000.0, 0.0, 0.0, 0.0]]).unwrap(),
            key_positions: vec![0.0, 0.0],
        };
        let err = rope_probe(&input, &[0], 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Probe(_)), "{err}");
        input.keys = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]).unwrap();
        assert!(rope_probe(&input, &[0], 1.0, &cfg).is_ok());
    }

    #[test]
    fn factorization_holds_to_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = RopeConfig::new(16, DEFAULT_ROPE_BASE).unwrap();
        let input = random_input(&mut rng, 16, 20);
        let vision: Vec<usize> = (4..14).collect();
        let mut prev = f64::INFINITY;
        for delta in [1e-2, 1e-3, 1e-4] {
            let r = rope_probe(&input, &vision, delta, &cfg).unwrap();
            let resid = (r.delta_alpha_v - r.balance_factor * r.delta_g_v).abs();
            assert!(resid < prev / 50.0, "delta {delta}: {resid}");
            prev = resid;
            // delta_g_v approximates g_v * delta
            assert!((r.delta_g_v - r.g_v * delta).abs() < 1e-2 * delta.abs() * r.g_v.abs().max(1.0));
        }
    }

    #[test]
    fn identical_groups_cancel() {
        // vision and text keys are copies at the same positions: g_V = g_T
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = RopeConfig::new(8, DEFAULT_ROPE_BASE).unwrap();
        let half = random_input(&mut rng, 8, 3);
        let keys = Matrix::vstack(&[&half.keys, &half.keys]).unwrap();
        let mut key_positions = half.key_positions.clone();
        key_positions.extend_from_slice(&half.key_positions);
        let input = ProbeInput { keys, key_positions, ..half };
        let all: Vec<usize> = (0..6).collect();
        let g = group_derivative(&input, &[0, 1, 2], &all, &cfg).unwrap();
        assert!((g.g_v - g.g_t.unwrap()).abs() < 1e-14);
        assert!(g.d_alpha_v.abs() < 1e-15);
    }

    #[test]
    fn saturated_text_gives_vanishing_derivative() {
        let cfg = RopeConfig::new(2, 10.0).unwrap();
        let input = ProbeInput {
            query: vec![1.0, 0.3],
            q_pos: 0.0,
            keys: Matrix::from_rows(&[[40.0, 1.0], [40.0, -2.0], [-40.0, 0.0]]).unwrap(),
            key_positions: vec![0.0, 1.0, 0.0],
        };
        let d = group_derivative_analytic(&input, &[0, 1], &cfg).unwrap();
        assert!(d.abs() < 1e-20, "{d}");
    }

    #[test]
    fn group_derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..100 {
            let d = 2 * rng.random_range(2..=64);
            let nv = rng.random_range(1..=16);
            let nt = rng.random_range(1..=16);
            let cfg = RopeConfig::new(d, DEFAULT_ROPE_BASE).unwrap();
            let input = random_input(&mut rng, d, nv + nt);
            let vision: Vec<usize> = (nt..nt + nv).collect();
            let analytic = group_derivative_analytic(&input, &vision, &cfg).unwrap();
            let eps = 1e-5;
            let fd = (alpha_v_at(&input, &vision, &vision, eps, &cfg)
                - alpha_v_at(&input, &vision, &vision, -eps, &cfg))
                / (2.0 * eps);
            let rel = (analytic - fd).abs() / (fd.abs() + 1e-12);
            assert!(rel < 1e-5, "trial {trial}: {analytic} vs {fd}");
        }
    }

    #[test]
    fn single_key_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = RopeConfig::new(8, DEFAULT_ROPE_BASE).unwrap();
        // zero query: uniform logits
        let mut input = random_input(&mut rng, 8, 5);
        let q = input.query.clone();
        input.query = vec![0.0; 8];
        let d = single_key_derivative(&input, 2, &[2], &cfg).unwrap();
        assert_eq!(d, 0.0);
        input.query = q;

        // the diagonal Jacobian term with equal weights: identical keys at one position
        let row: Vec<f64> = input.keys.row(0).to_vec();
        let same = ProbeInput {
            query: input.query.clone(),
            q_pos: 9.0,
            keys: Matrix::from_rows(&[row.clone(), row.clone(), row.clone(), row]).unwrap(),
            key_positions: vec![3.0; 4],
        };
        let dl = crate::rope::logit_phase_derivative(&same.query, same.keys.row(1), 9.0, 3.0, &cfg).unwrap();
        let d = single_key_derivative(&same, 1, &[1], &cfg).unwrap();
        assert!((d - 0.25 * 0.75 * dl).abs() < 1e-15);

        // linearity: summing over vision keys gives the group derivative
        let vision = [1, 3, 4];
        let total: f64 = vision
            .iter()
            .map(|&v| single_key_derivative(&input, v, &vision, &cfg).unwrap())
            .sum();
        let group = group_derivative_analytic(&input, &vision, &cfg).unwrap();
        assert!((total - group).abs() < 1e-14);

        // against finite differences
        let eps = 1e-5;
        for k in 0..5 {
            let plus = alpha_v_at(&input, &[k], &vision, eps, &cfg);
            let minus = alpha_v_at(&input, &[k], &vision, -eps, &cfg);
            let fd = (plus - minus) / (2.0 * eps);
            let an = single_key_derivative(&input, k, &vision, &cfg).unwrap();
            assert!((an - fd).abs() / (fd.abs() + 1e-12) < 1e-5, "key {k}: {an} vs {fd}");
        }
    }
}
