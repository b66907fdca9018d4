//! Residual-scale suppression of phase sensitivity in a pre-norm block.
//!
//! With `h = r + a(phi)` and `u = h / |h|`,
//! `du/dphi = (I - u u^T) / |h| * da/dphi`, so a large residual carry `r`
//! damps how much a phase-induced attention change can turn the hidden
//! direction.

use crate::error::{Error, Result};
use crate::tensor::{dot, l2_norm};

/// `| (I - u u^T) d_attn_dphi | / |h|` with `h = residual + attn_out`.
pub fn residual_phase_sensitivity(residual: &[f64], attn_out: &[f64], d_attn_dphi: &[f64]) -> Result<f64> {
    if residual.len() != attn_out.len() || residual.len() != d_attn_dphi.len() {
        return Err(Error::dims(format!(
            "residual {}, attention output {}, derivative {}",
            residual.len(),
            attn_out.len(),
            d_attn_dphi.len()
        )));
    }
    let h: Vec<f64> = residual.iter().zip(attn_out).map(|(r, a)| r + a).collect();
    let norm = l2_norm(&h);
    if norm == 0.0 {
        return Err(Error::InvalidArgument("hidden state r + a is zero".into()));
    }
    let u: Vec<f64> = h.iter().map(|x| x / norm).collect();
    let along = dot(&u, d_attn_dphi);
    let projected: Vec<f64> = d_attn_dphi.iter().zip(&u).map(|(d, u)| d - along * u).collect();
    Ok(l2_norm(&projected) / norm)
}
