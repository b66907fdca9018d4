//! Named-matrix bundles (`ATNS` files), used for hidden-state dumps and
//! intervention inputs and outputs.
//!
//! Layout: magic `ATNS`, `u32` version, `u64` metadata length, JSON metadata
//! `{"dtype", "tensors": [{"name", "rows", "cols"}], "partition"}`, `u64`
//! payload length, then each tensor row-major in metadata order.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::TokenPartition;
use crate::tensor::Matrix;

use super::binary::{Dtype, Reader, Writer};

pub const TENSOR_MAGIC: [u8; 4] = *b"ATNS";
const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub dtype: Dtype,
    pub tensors: Vec<(String, Matrix)>,
    pub partition: Option<TokenPartition>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    dtype: Dtype,
    tensors: Vec<Entry>,
    partition: Option<TokenPartition>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Tensors in file order, without their names.
    pub fn matrices(&self) -> Vec<Matrix> {
        self.tensors.iter().map(|(_, m)| m.clone()).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut seen = BTreeSet::new();
        if let Some((dup, _)) = self.tensors.iter().find(|(n, _)| !seen.insert(n.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate tensor name {dup:?}")));
        }
        let meta = Meta {
            dtype: self.dtype,
            tensors: self
                .tensors
                .iter()
                .map(|(name, m)| Entry {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
            partition: self.partition.clone(),
        };
        let json = serde_json::to_vec(&meta)?;
        let total = self.tensors.iter().map(|(_, m)| m.as_slice().len()).sum();
        let mut w = Writer::new(self.dtype, total);
        for (_, m) in &self.tensors {
            w.values(m.as_slice());
        }
        let payload = w.finish();
        let mut out = Vec::with_capacity(24 + json.len() + payload.len());
        out.extend_from_slice(&TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(TENSOR_MAGIC)?;
        r.version(TENSOR_VERSION)?;
        let meta: Meta = serde_json::from_slice(r.block()?)?;
        let payload = r.block()?;
        let values: usize = meta.tensors.iter().map(|e| e.rows * e.cols).sum();
        if payload.len() != values * meta.dtype.width() {
            return Err(Error::ShapeInconsistency(format!(
                "payload is {} bytes, metadata implies {}",
                payload.len(),
                values * meta.dtype.width()
            )));
        }
        let mut p = Reader::new(payload);
        let tensors = meta
            .tensors
            .into_iter()
            .map(|e| Ok((e.name, p.matrix(meta.dtype, e.rows, e.cols)?)))
            .collect::<Result<Vec<_>>>()?;
        debug_assert!(p.is_done());
        Ok(Self {
            dtype: meta.dtype,
            tensors,
            partition: meta.partition,
        })
    }
}

pub fn write_tensors(file: &TensorFile, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, file.to_bytes()?)?;
    Ok(())
}

pub fn read_tensors(path: impl AsRef<Path>) -> Result<TensorFile> {
    TensorFile::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TensorFile {
        TensorFile {
            dtype: Dtype::F64,
            tensors: vec![
                ("a".into(), Matrix::from_fn(3, 2, |r, c| r as f64 - 0.25 * c as f64)),
                ("b".into(), Matrix::zeros(0, 4)),
            ],
            partition: Some(TokenPartition::contiguous(1, 1, 1)),
        }
    }

    #[test]
    fn roundtrip() {
        let f = sample();
        assert_eq!(TensorFile::from_bytes(&f.to_bytes().unwrap()).unwrap(), f);
        assert_eq!(f.get("a").unwrap()[(2, 1)], 1.75);
    }

    #[test]
    fn rejects_duplicates_and_trace_magic() {
        let mut f = sample();
        f.tensors.push(("a".into(), Matrix::zeros(1, 1)));
        assert!(f.to_bytes().is_err());
        let mut bytes = sample().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"ATRC");
        assert!(matches!(TensorFile::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }
}
