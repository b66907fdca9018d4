//! Representation-level manipulations of vision tokens: RMS scale matching,
//! multilayer feature concatenation and grid average pooling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{TokenGroup, TokenPartition};
use crate::tensor::{rms, Matrix};

/// Mean text-token RMS measured on LLaVA-1.5 embeddings.
pub const DEFAULT_TARGET_RMS: f64 = 0.83;
/// Recorded alongside the mean; not used for calibration.
pub const MEASURED_TEXT_MAX_RMS: f64 = 1.22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationSource {
    Fixed,
    MeasuredFromText,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormCalibration {
    target_rms: f64,
    source: CalibrationSource,
}

impl Default for NormCalibration {
    fn default() -> Self {
        Self {
            target_rms: DEFAULT_TARGET_RMS,
            source: CalibrationSource::Fixed,
        }
    }
}

impl NormCalibration {
    pub fn fixed(target_rms: f64) -> Result<Self> {
        if !(target_rms > 0.0) || !target_rms.is_finite() {
            return Err(Error::InvalidArgument(format!("target RMS must be > 0, got {target_rms}")));
        }
        Ok(Self {
            target_rms,
            source: CalibrationSource::Fixed,
        })
    }

    /// Mean per-token RMS of the text rows.
    pub fn measured_from_text(embeddings: &Matrix, partition: &TokenPartition) -> Result<Self> {
        partition.check_len(embeddings.rows(), "embeddings")?;
        let text = partition.indices(TokenGroup::Text);
        if text.is_empty() {
            return Err(Error::InvalidPartition("no text tokens to calibrate from".into()));
        }
        let mean = text.iter().map(|&i| rms(embeddings.row(i))).sum::<f64>() / text.len() as f64;
        let mut cal = Self::fixed(mean)?;
        cal.source = CalibrationSource::MeasuredFromText;
        Ok(cal)
    }

    pub fn target_rms(&self) -> f64 {
        self.target_rms
    }

    pub fn source(&self) -> CalibrationSource {
        self.source
    }
}

/// Rescales each vision row to RMS `cal.target_rms()`; other rows are copied.
pub fn normalize_vision(embeddings: &Matrix, partition: &TokenPartition, cal: &NormCalibration) -> Result<Matrix> {
    partition.check_len(embeddings.rows(), "embeddings")?;
    let mut out = embeddings.clone();
    for &i in partition.vision() {
        let row = out.row_mut(i);
        let r = rms(row);
        if r == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "vision row {i} is zero; its direction is undefined"
            )));
        }
        let k = cal.target_rms / r;
        row.iter_mut().for_each(|x| *x *= k);
    }
    Ok(out)
}

/// Concatenates per-token features from several encoder layers (in the
/// given order) and projects them with `projector` (`sum(widths) x out`).
pub fn multilayer_concat(layer_features: &[Matrix], layer_ids: &[usize], projector: &Matrix) -> Result<Matrix> {
    let first = layer_features
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty layer list".into()))?;
    if layer_ids.len() != layer_features.len() {
        return Err(Error::InvalidArgument(format!(
            "{} layer ids for {} feature matrices",
            layer_ids.len(),
            layer_features.len()
        )));
    }
    let tokens = first.rows();
    let mut width = 0;
    for (m, id) in layer_features.iter().zip(layer_ids) {
        if m.rows() != tokens {
            return Err(Error::dims(format!(
                "layer {id} has {} tokens, expected {tokens}",
                m.rows()
            )));
        }
        width += m.cols();
    }
    if width != projector.rows() {
        return Err(Error::dims(format!(
            "concatenated width {width} but projector expects {}",
            projector.rows()
        )));
    }
    let concat = Matrix::from_fn(tokens, width, {
        let offsets: Vec<(usize, &Matrix)> = layer_features
            .iter()
            .scan(0, |off, m| {
                let start = *off;
                *off += m.cols();
                Some((start, m))
            })
            .collect();
        move |r, c| {
            let k = offsets.partition_point(|(start, _)| *start <= c) - 1;
            let (start, m) = offsets[k];
            m[(r, c - start)]
        }
    });
    concat.matmul(projector)
}

fn square_side(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

/// 2D average pooling of a square token grid (row-major) down to
/// `target_count` tokens, which must itself be a square.
///
/// Windows follow adaptive pooling: output cell `i` covers input rows
/// `floor(i n / t) .. ceil((i + 1) n / t)`. When the output side divides the
/// input side this is plain non-overlapping pooling.
pub fn avg_pool_compress(tokens: &Matrix, target_count: usize) -> Result<Matrix> {
    let n = tokens.rows();
    let side = square_side(n)
        .filter(|&s| s > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{n} tokens do not form a square grid")))?;
    if target_count == 0 || target_count > n {
        return Err(Error::InvalidArgument(format!(
            "target {target_count} outside 1..={n}"
        )));
    }
    let out_side = square_side(target_count).ok_or_else(|| {
        Error::InvalidArgument(format!("target {target_count} is not a square grid size"))
    })?;
    if out_side == side {
        return Ok(tokens.clone());
    }
    let window = |i: usize| (i * side / out_side, ((i + 1) * side).div_ceil(out_side));
    let d = tokens.cols();
    let mut out = Matrix::zeros(target_count, d);
    for oy in 0..out_side {
        let (y0, y1) = window(oy);
        for ox in 0..out_side {
            let (x0, x1) = window(ox);
            let cells: Vec<usize> = (y0..y1)
                .flat_map(|y| (x0..x1).map(move |x| y * side + x))
                .collect();
            let count = cells.len() as f64;
            let mut column = Vec::with_capacity(cells.len());
            for (j, a) in out.row_mut(oy * out_side + ox).iter_mut().enumerate() {
                // sorted summation makes the result independent of token order
                column.clear();
                column.extend(cells.iter().map(|&c| tokens[(c, j)]));
                column.sort_by(f64::total_cmp);
                *a = column.iter().sum::<f64>() / count;
            }
        }
    }
    Ok(out)
}
