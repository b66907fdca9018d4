//! On-disk formats: attention traces, tensor bundles and probe reports.
//!
//! # Trace file layout (version 1)
//!
//! All integers and floats are little-endian.
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `ATRC` |
//! | 4 | `u32` format version |
//! | 8 | `u64` metadata length `M` |
//! | M | UTF-8 JSON metadata |
//! | 8 | `u64` payload length `P` |
//! | P | payload |
//!
//! Metadata keys: `model`, `layers`, `heads`, `head_dim`, `seq_len`,
//! `rope_base`, `pairing` (`"interleaved"` or `"half-split"`), `dtype`
//! (`"f32"` or `"f64"`), `query_steps`, `partition` (`seq_len`, `system`,
//! `vision`, `text`) and `hidden` (`{"count", "dim"}` or `null`).
//!
//! The payload is a flat sequence of `dtype` values: the `seq_len` RoPE
//! positions; then for each layer, for each head, the pre-rotation queries
//! (`steps x head_dim`), the pre-rotation keys (`seq_len x head_dim`) and the
//! attention rows (`steps x seq_len`), all row-major; then, if present,
//! `count` hidden-state matrices of `seq_len x dim`.

mod binary;
mod report;
mod tensor;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::TokenPartition;
use crate::rope::{Pairing, RopeConfig};
use crate::tensor::Matrix;
use crate::toy::ForwardRecord;
use crate::trace::{AttentionTrace, HeadTrace};

use binary::{Reader, Writer};
pub use binary::Dtype;
pub use report::{emit_report, format_float, render_report, ReportFormat, Table, Tabular, Value};
pub use tensor::{read_tensors, write_tensors, TensorFile, TENSOR_MAGIC};

pub const TRACE_MAGIC: [u8; 4] = *b"ATRC";
pub const TRACE_VERSION: u32 = 1;
/// Attention rows whose sum is further than this from 1 are renormalized on
/// read.
pub const RENORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenMeta {
    pub count: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    model: String,
    layers: usize,
    heads: usize,
    head_dim: usize,
    seq_len: usize,
    rope_base: f64,
    pairing: String,
    dtype: Dtype,
    query_steps: Vec<usize>,
    partition: TokenPartition,
    hidden: Option<HiddenMeta>,
}

impl Metadata {
    fn payload_values(&self) -> usize {
        let steps = self.query_steps.len();
        let per_head = steps * self.head_dim + self.seq_len * self.head_dim + steps * self.seq_len;
        let hidden = self.hidden.as_ref().map_or(0, |h| h.count * self.seq_len * h.dim);
        self.seq_len + self.layers * self.heads * per_head + hidden
    }
}

/// Everything a trace file carries.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub model: String,
    pub trace: AttentionTrace,
    pub partition: TokenPartition,
    pub rope: RopeConfig,
    pub dtype: Dtype,
    /// Residual stream per layer, for norm profiling.
    pub hidden: Option<Vec<Matrix>>,
}

/// Side information gathered while reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReadReport {
    pub renormalized_rows: usize,
}

impl TraceFile {
    /// Capture of a toy forward pass at `query_steps`.
    pub fn from_record(
        model: impl Into<String>,
        record: &ForwardRecord,
        query_steps: &[usize],
        partition: &TokenPartition,
        rope: &RopeConfig,
        with_hidden: bool,
    ) -> Result<Self> {
        Ok(Self {
            model: model.into(),
            trace: record.trace(query_steps)?,
            partition: partition.clone(),
            rope: rope.clone(),
            dtype: Dtype::F64,
            hidden: with_hidden.then(|| record.hidden.clone()),
        })
    }

    fn metadata(&self) -> Result<Metadata> {
        let t = &self.trace;
        if self.partition.seq_len() != t.seq_len() {
            return Err(Error::ShapeInconsistency(format!(
                "partition covers {} positions, trace has {}",
                self.partition.seq_len(),
                t.seq_len()
            )));
        }
        if self.rope.head_dim() != t.head_dim() {
            return Err(Error::ShapeInconsistency(format!(
                "rope head_dim {} vs trace head_dim {}",
                self.rope.head_dim(),
                t.head_dim()
            )));
        }
        let hidden = match &self.hidden {
            None => None,
            Some(h) => {
                let dim = h.first().map_or(0, Matrix::cols);
                if let Some(m) = h.iter().find(|m| m.shape() != (t.seq_len(), dim)) {
                    return Err(Error::ShapeInconsistency(format!(
                        "hidden state {:?}, expected ({}, {dim})",
                        m.shape(),
                        t.seq_len()
                    )));
                }
                Some(HiddenMeta { count: h.len(), dim })
            }
        };
        Ok(Metadata {
            model: self.model.clone(),
            layers: t.layers(),
            heads: t.heads(),
            head_dim: t.head_dim(),
            seq_len: t.seq_len(),
            rope_base: self.rope.base(),
            pairing: self.rope.pairing().as_str().to_string(),
            dtype: self.dtype,
            query_steps: t.query_steps().to_vec(),
            partition: self.partition.clone(),
            hidden,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = self.metadata()?;
        let meta_json = serde_json::to_vec(&meta)?;
        let mut payload = Writer::new(self.dtype, meta.payload_values());
        payload.values(self.trace.positions());
        for cap in self.trace.captures() {
            payload.values(cap.queries.as_slice());
            payload.values(cap.keys.as_slice());
            payload.values(cap.attention.as_slice());
        }
        for m in self.hidden.iter().flatten() {
            payload.values(m.as_slice());
        }
        let payload = payload.finish();
        let mut out = Vec::with_capacity(24 + meta_json.len() + payload.len());
        out.extend_from_slice(&TRACE_MAGIC);
        out.extend_from_slice(&TRACE_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta_json);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, ReadReport)> {
        let mut r = Reader::new(bytes);
        r.magic(TRACE_MAGIC)?;
        r.version(TRACE_VERSION)?;
        let meta: Metadata = serde_json::from_slice(r.block()?)?;
        let rope = RopeConfig::with_pairing(meta.head_dim, meta.rope_base, meta.pairing.parse::<Pairing>()?)?;
        if meta.partition.seq_len() != meta.seq_len {
            return Err(Error::InvalidPartition(format!(
                "partition covers {} positions, metadata declares {}",
                meta.partition.seq_len(),
                meta.seq_len
            )));
        }
        let expected = (meta.payload_values() * meta.dtype.width()) as u64;
        let payload = r.block()?;
        if payload.len() as u64 != expected {
            return Err(Error::ShapeInconsistency(format!(
                "payload is {} bytes, metadata implies {expected}",
                payload.len()
            )));
        }
        let mut p = Reader::new(payload);
        let steps = meta.query_steps.len();
        let (n, d) = (meta.seq_len, meta.head_dim);
        let positions = p.values(meta.dtype, n)?;
        let mut captures = Vec::with_capacity(meta.layers * meta.heads);
        let mut report = ReadReport::default();
        for _ in 0..meta.layers * meta.heads {
            let queries = p.matrix(meta.dtype, steps, d)?;
            let keys = p.matrix(meta.dtype, n, d)?;
            let mut attention = p.matrix(meta.dtype, steps, n)?;
            for s in 0..steps {
                let row = attention.row_mut(s);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > RENORM_TOLERANCE {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::ShapeInconsistency(format!(
                            "attention row sums to {sum} and cannot be renormalized"
                        )));
                    }
                    row.iter_mut().for_each(|w| *w /= sum);
                    report.renormalized_rows += 1;
                }
            }
            captures.push(HeadTrace {
                queries,
                keys,
                attention,
            });
        }
        let hidden = match &meta.hidden {
            None => None,
            Some(h) => Some(
                (0..h.count)
                    .map(|_| p.matrix(meta.dtype, n, h.dim))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let trace = AttentionTrace::new(meta.layers, meta.heads, d, positions, meta.query_steps, captures)?;
        Ok((
            Self {
                model: meta.model,
                trace,
                partition: meta.partition,
                rope,
                dtype: meta.dtype,
                hidden,
            },
            report,
        ))
    }
}

/// Writes `file` to `path`. Identical input gives identical bytes.
pub fn write_trace(file: &TraceFile, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, file.to_bytes()?)?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<(TraceFile, ReadReport)> {
    TraceFile::from_bytes(&std::fs::read(path)?)
}
