//! Seeded numerical checks of the attention-derivative identities: the group
//! mass derivative against central finite differences, the second-order
//! convergence of the balance-factor factorization, and the residual-scale
//! damping of the hidden-direction sensitivity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{group_derivative_analytic, residual_phase_sensitivity, rope_probe};
use crate::rope::{attention_logits, phase_shift_keys, RopeConfig, DEFAULT_ROPE_BASE};
use crate::tensor::{dot, l2_norm, softmax, Matrix};
use crate::trace::ProbeInput;

/// A random query/key instance with the vision keys scattered among the
/// others at continuous positions.
#[derive(Debug, Clone)]
pub struct Instance {
    pub input: ProbeInput,
    pub vision: Vec<usize>,
    pub rope: RopeConfig,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `head_dim` even in `[4, 128]`, `|V|` and `|T|` in `[1, 64]`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> Instance {
    let d = 2 * rng.random_range(2..=64usize);
    let n_v = rng.random_range(1..=64usize);
    let n_t = rng.random_range(1..=64usize);
    let n = n_v + n_t;
    let mut vision: Vec<usize> = rand::seq::index::sample(rng, n, n_v).into_vec();
    vision.sort_unstable();
    let mut key_positions: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2000.0)).collect();
    key_positions.sort_by(f64::total_cmp);
    let q_pos = key_positions[n - 1] + rng.random_range(0.0..10.0);
    let scale = rng.random_range(0.5..3.0);
    let query = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
    let keys = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    Instance {
        input: ProbeInput {
            query,
            q_pos,
            keys,
            key_positions,
        },
        vision,
        rope: RopeConfig::new(d, DEFAULT_ROPE_BASE).expect("even head_dim"),
    }
}

/// Vision mass after moving the vision keys by `phi`.
pub fn alpha_v_at(inst: &Instance, phi: f64) -> Result<f64> {
    let inp = &inst.input;
    let (_, pos) = phase_shift_keys(&inp.keys, &inp.key_positions, &inst.vision, phi)?;
    let a = softmax(&attention_logits(&inp.query, &inp.keys, inp.q_pos, &pos, &inst.rope)?)?;
    Ok(inst.vision.iter().map(|&v| a[v]).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub trials: usize,
    pub eps: f64,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub worst_trial: usize,
    pub smallest_derivative: f64,
}

/// Analytic `d alpha_V / d phi` against `(alpha_V(eps) - alpha_V(-eps)) / 2 eps`
/// over `trials` random instances.
pub fn identity_suite(trials: usize, seed: u64, eps: f64) -> Result<IdentityReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let errs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = random_instance(&mut trial_rng(seed, t as u64));
            let analytic = group_derivative_analytic(&inst.input, &inst.vision, &inst.rope)?;
            let fd = (alpha_v_at(&inst, eps)? - alpha_v_at(&inst, -eps)?) / (2.0 * eps);
            Ok(((analytic - fd).abs() / (fd.abs() + 1e-12), fd.abs()))
        })
        .collect::<Result<_>>()?;
    let (worst_trial, max_rel_error) = errs
        .iter()
        .map(|e| e.0)
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(IdentityReport {
        trials,
        eps,
        max_rel_error,
        mean_rel_error: errs.iter().map(|e| e.0).sum::<f64>() / trials as f64,
        worst_trial,
        smallest_derivative: errs.iter().map(|e| e.1).fold(f64::INFINITY, f64::min),
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub instances: usize,
    pub deltas: Vec<f64>,
    /// Mean residual `|dalpha_V - alpha_V (1 - alpha_V) dg_V|` per delta.
    pub mean_residuals: Vec<f64>,
    pub aggregate_slope: f64,
    pub min_slope: f64,
    pub median_slope: f64,
    pub max_slope: f64,
}

/// The residual of the first-order factorization at each delta, per
/// instance, and the convergence order it implies.
pub fn factorization_suite(instances: usize, seed: u64, deltas: &[f64]) -> Result<FactorizationReport> {
    if instances == 0 || deltas.len() < 2 {
        return Err(Error::InvalidArgument("need instances and at least two deltas".into()));
    }
    let residuals: Vec<Vec<f64>> = (0..instances)
        .into_par_iter()
        .map(|t| {
            // separate stream family from the identity suite
            let inst = random_instance(&mut trial_rng(seed, (1 << 40) + t as u64));
            deltas
                .iter()
                .map(|&d| {
                    let r = rope_probe(&inst.input, &inst.vision, d, &inst.rope)?;
                    Ok((r.delta_alpha_v - r.balance_factor * r.delta_g_v).abs())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mean_residuals: Vec<f64> = (0..deltas.len())
        .map(|k| residuals.iter().map(|r| r[k]).sum::<f64>() / instances as f64)
        .collect();
    let mut slopes: Vec<f64> = residuals.iter().map(|r| log_log_slope(deltas, r)).collect();
    slopes.sort_by(f64::total_cmp);
    Ok(FactorizationReport {
        instances,
        deltas: deltas.to_vec(),
        aggregate_slope: log_log_slope(deltas, &mean_residuals),
        min_slope: slopes[0],
        median_slope: slopes[slopes.len() / 2],
        max_slope: slopes[slopes.len() - 1],
        mean_residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuppressionReport {
    pub instances: usize,
    pub scale: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

/// `sensitivity(scale * r) / sensitivity(r)` on instances where the
/// attention update is small next to the residual and its phase derivative
/// is orthogonal to the residual.
pub fn suppression_suite(instances: usize, seed: u64, scale: f64) -> Result<SuppressionReport> {
    if instances == 0 {
        return Err(Error::InvalidArgument("at least one instance is required".into()));
    }
    let ratios: Vec<f64> = (0..instances)
        .map(|t| {
            let mut rng = trial_rng(seed, (2 << 40) + t as u64);
            let n = rng.random_range(8..=64usize);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let shrink = rng.random_range(0.0..0.05) * l2_norm(&r) / l2_norm(&a);
            a.iter_mut().for_each(|x| *x *= shrink);
            let mut da: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let along = dot(&da, &r) / dot(&r, &r);
            da.iter_mut().zip(&r).for_each(|(d, r)| *d -= along * r);
            let scaled: Vec<f64> = r.iter().map(|x| x * scale).collect();
            Ok(residual_phase_sensitivity(&scaled, &a, &da)? / residual_phase_sensitivity(&r, &a, &da)?)
        })
        .collect::<Result<_>>()?;
    Ok(SuppressionReport {
        instances,
        scale,
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_ratio: ratios.iter().sum::<f64>() / instances as f64,
    })
}

pub const FACTORIZATION_DELTAS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// All three checks with their pass thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub identity: IdentityReport,
    pub factorization: FactorizationReport,
    pub suppression: SuppressionReport,
}

impl AppendixReport {
    pub fn identity_ok(&self) -> bool {
        self.identity.max_rel_error < 1e-5
    }

    pub fn factorization_ok(&self) -> bool {
        (self.factorization.aggregate_slope - 2.0).abs() <= 0.2
    }

    pub fn suppression_ok(&self) -> bool {
        self.suppression.min_ratio >= 0.009 && self.suppression.max_ratio <= 0.011
    }

    pub fn passed(&self) -> bool {
        self.identity_ok() && self.factorization_ok() && self.suppression_ok()
    }
}

/// `trials` identity checks; the two smaller suites use `max(trials / 10, 100)`
/// instances.
pub fn appendix_a(trials: usize, seed: u64) -> Result<AppendixReport> {
    let small = (trials / 10).max(100);
    Ok(AppendixReport {
        identity: identity_suite(trials, seed, 1e-5)?,
        factorization: factorization_suite(small, seed, &FACTORIZATION_DELTAS)?,
        suppression: suppression_suite(small, seed, 100.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1e-2, 1e-3, 1e-4];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((log_log_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn instances_respect_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let inst = random_instance(&mut rng);
            let d = inst.rope.head_dim();
            assert!((4..=128).contains(&d) && d % 2 == 0);
            let n = inst.input.len();
            let nv = inst.vision.len();
            assert!((1..=64).contains(&nv) && (1..=64).contains(&(n - nv)));
        }
    }

    #[test]
    fn small_suites_pass() {
        let r = identity_suite(50, 3, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        let f = factorization_suite(20, 3, &FACTORIZATION_DELTAS).unwrap();
        assert!((f.aggregate_slope - 2.0).abs() < 0.2, "{f:?}");
        let s = suppression_suite(20, 3, 100.0).unwrap();
        assert!(s.min_ratio >= 0.009 && s.max_ratio <= 0.011, "{s:?}");
    }
}
