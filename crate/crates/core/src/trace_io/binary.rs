//! Little-endian framing shared by the trace and tensor formats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Storage width of payload values. Everything is `f64` in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub(crate) struct Writer {
    dtype: Dtype,
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(dtype: Dtype, values: usize) -> Self {
        Self {
            dtype,
            buf: Vec::with_capacity(values * dtype.width()),
        }
    }

    pub(crate) fn values(&mut self, xs: &[f64]) {
        match self.dtype {
            Dtype::F32 => xs.iter().for_each(|&x| self.buf.extend_from_slice(&(x as f32).to_le_bytes())),
            Dtype::F64 => xs.iter().for_each(|&x| self.buf.extend_from_slice(&x.to_le_bytes())),
        }
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.at..];
        if rest.len() < n {
            return Err(Error::TruncatedPayload {
                declared: n as u64,
                actual: rest.len() as u64,
            });
        }
        self.at += n;
        Ok(&rest[..n])
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let mut found = [0u8; 4];
        let got = &self.bytes[..self.bytes.len().min(4)];
        found[..got.len()].copy_from_slice(got);
        if got.len() < 4 || found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        self.at = 4;
        Ok(())
    }

    pub(crate) fn version(&mut self, supported: u32) -> Result<u32> {
        let found = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
        if found == 0 || found > supported {
            return Err(Error::UnsupportedVersion { found, supported });
        }
        Ok(found)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// A `u64` length followed by that many bytes.
    pub(crate) fn block(&mut self) -> Result<&'a [u8]> {
        let declared = self.u64()?;
        let rest = (self.bytes.len() - self.at) as u64;
        if declared > rest {
            return Err(Error::TruncatedPayload { declared, actual: rest });
        }
        self.take(declared as usize)
    }

    pub(crate) fn values(&mut self, dtype: Dtype, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * dtype.width())?;
        Ok(match dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        })
    }

    pub(crate) fn matrix(&mut self, dtype: Dtype, rows: usize, cols: usize) -> Result<Matrix> {
        Matrix::from_vec(rows, cols, self.values(dtype, rows * cols)?)
    }

    pub(crate) fn is_done(&self) -> bool {
        self.at == self.bytes.len()
    }
}
