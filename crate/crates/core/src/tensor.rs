//! Dense f64 primitives: a row-major [`Matrix`] plus the handful of vector
//! reductions the probes are built on.
//!
//! Vectors are plain `&[f64]` / `Vec<f64>`. Everything is f64 so that analytic
//! derivatives can be compared against finite differences without the
//! rounding of single precision swamping the comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default epsilon for [`rms_norm`].
pub const RMS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a zero-width matrix still has `rows` empty rows
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn set_row(&mut self, r: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.cols {
            return Err(Error::dims(format!(
                "row of length {} into matrix with {} columns",
                values.len(),
                self.cols
            )));
        }
        self.row_mut(r).copy_from_slice(values);
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dims(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let lhs_row = self.row(r);
            let out_row = out.row_mut(r);
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `v · self`.
    pub fn vecmul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::dims(format!(
                "vector of length {} times {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (k, &a) in v.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.row(k)) {
                *o += a * b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dims(format!(
                "add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::dims(format!("vstack of {} and {} columns", cols, m.cols)));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Mean over rows.
    pub fn mean_row(&self) -> Result<Vec<f64>> {
        if self.rows == 0 {
            return Err(Error::EmptyInput);
        }
        let mut acc = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (a, x) in acc.iter_mut().zip(r) {
                *a += x;
            }
        }
        let n = self.rows as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyLogits);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `gain_i * v_i / sqrt(mean(v^2) + eps)`. `gain = None` means unit gain.
pub fn rms_norm(v: &[f64], eps: f64, gain: Option<&[f64]>) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(g) = gain {
        if g.len() != v.len() {
            return Err(Error::dims(format!(
                "rms_norm gain length {} vs input {}",
                g.len(),
                v.len()
            )));
        }
    }
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!("rms_norm eps {eps} < 0")));
    }
    let denom = (rms_sq(v) + eps).sqrt();
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "rms_norm of a zero vector with eps = 0".into(),
        ));
    }
    Ok(match gain {
        Some(g) => v.iter().zip(g).map(|(x, g)| g * x / denom).collect(),
        None => v.iter().map(|x| x / denom).collect(),
    })
}

fn rms_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

/// Root mean square of the entries.
pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    rms_sq(v).sqrt()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (l2_norm(a) * l2_norm(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        for c in [-700.0, -3.5, 0.0, 42.0, 900.0] {
            let p = softmax(&[c; 4]).unwrap();
            assert!(close(&p, &[0.25; 4], 1e-15), "{p:?}");
        }
        // exp(k)/sum, evaluated at 40 digits
        let want = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_65,
            0.665_240_955_774_821_9,
        ];
        assert!(close(&softmax(&[1.0, 2.0, 3.0]).unwrap(), &want, 1e-15));
    }

    #[test]
    fn softmax_empty_is_error() {
        let err = softmax(&[]).unwrap_err();
        assert_eq!(err.to_string(), "empty logits");
    }

    #[test]
    fn rms_norm_examples() {
        assert_eq!(rms_norm(&[1.0; 4], 0.0, None).unwrap(), vec![1.0; 4]);
        assert_eq!(rms_norm(&[2.0, 2.0], 0.0, None).unwrap(), vec![1.0, 1.0]);
        let out = rms_norm(&[3.0, 4.0], 0.0, None).unwrap();
        assert!(close(&out, &[0.848_528_137_423_857, 1.131_370_849_898_476], 1e-15));
        let g = rms_norm(&[3.0, 4.0], 0.0, Some(&[2.0, -1.0])).unwrap();
        assert!(close(&g, &[2.0 * out[0], -out[1]], 1e-15));
    }

    #[test]
    fn rms_norm_gain_mismatch() {
        assert!(matches!(
            rms_norm(&[1.0, 2.0], RMS_EPS, Some(&[1.0])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn l2_norm_examples() {
        assert_eq!(l2_norm(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(l2_norm(&[1.0; 4]), 2.0);
    }

    #[test]
    fn matmul_against_hand_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[5.0, 6.0, 7.0], [8.0, 9.0, 10.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[21.0, 24.0, 27.0, 47.0, 54.0, 61.0]);
        assert_eq!(a.vecmul(&[1.0, 1.0]).unwrap(), vec![4.0, 6.0]);
        assert!(a.matmul(&a.transpose()).is_ok());
        assert!(b.matmul(&a).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..4096)) {
            let p = softmax(&v).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..256), c in -100.0f64..100.0) {
            let a = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted).unwrap();
            prop_assert!(close(&a, &b, 1e-12));
        }

        #[test]
        fn rms_norm_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..64)) {
            prop_assume!(l2_norm(&v) > 1e-6);
            let once = rms_norm(&v, 0.0, None).unwrap();
            let twice = rms_norm(&once, 0.0, None).unwrap();
            prop_assert!(close(&once, &twice, 1e-12));
        }

        #[test]
        fn l2_norm_homogeneous(v in prop::collection::vec(-100.0f64..100.0, 1..64), c in -1e3f64..1e3) {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let lhs = l2_norm(&scaled);
            let rhs = c.abs() * l2_norm(&v);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}
