//! Flat tables for probe and evaluation results, written as CSV or JSON.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::probes::{AttentionShare, CmbHeatmap, EntropyTable, NormProfile, PsiReport, RopeCurve};
use crate::scene2ds::AccuracyReport;
use crate::verify::AppendixReport;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Null,
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Null, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }
}

pub trait Tabular {
    fn table(&self) -> Table;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown report format {other:?} (csv, json)"))),
        }
    }
}

/// Nine significant digits, C `%.9g` style.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (8 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format_float(*f),
        Value::Text(s) => csv_field(s),
        Value::Null => String::new(),
    }
}

fn json_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(f) if f.is_finite() => format_float(*f),
        Value::Float(_) | Value::Null => "null".into(),
        Value::Text(s) => serde_json::to_string(s).expect("string serializes"),
    }
}

/// CSV with a header row, or a JSON array of objects with keys in column
/// order. Non-finite floats are empty in CSV and `null` in JSON.
pub fn render_report(table: &Table, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            let header: Vec<String> = table.columns.iter().map(|c| csv_field(c)).collect();
            writeln!(out, "{}", header.join(",")).unwrap();
            for row in &table.rows {
                let cells: Vec<String> = row
                    .iter()
                    .map(|v| match v {
                        Value::Float(f) if !f.is_finite() => String::new(),
                        v => csv_value(v),
                    })
                    .collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
        }
        ReportFormat::Json => {
            out.push('[');
            for (i, row) in table.rows.iter().enumerate() {
                out.push_str(if i == 0 { "\n  {" } else { ",\n  {" });
                for (j, (col, v)) in table.columns.iter().zip(row).enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    let key = serde_json::to_string(col).expect("string serializes");
                    write!(out, "{key}: {}", json_value(v)).unwrap();
                }
                out.push('}');
            }
            out.push_str(if table.rows.is_empty() { "]\n" } else { "\n]\n" });
        }
    }
    out
}

pub fn emit_report<T: Tabular + ?Sized, W: Write>(report: &T, format: ReportFormat, mut out: W) -> Result<()> {
    out.write_all(render_report(&report.table(), format).as_bytes())?;
    Ok(())
}

impl Tabular for CmbHeatmap {
    fn table(&self) -> Table {
        let mut t = Table::new(&["layer", "head", "cmb"]);
        for l in 0..self.values.rows() {
            for h in 0..self.values.cols() {
                t.push(vec![l.into(), h.into(), self.values[(l, h)].into()]);
            }
        }
        t
    }
}

impl Tabular for EntropyTable {
    fn table(&self) -> Table {
        let mut t = Table::new(&["layer", "head", "entropy", "layer_mean"]);
        for (l, heads) in self.per_head.iter().enumerate() {
            for (h, &e) in heads.iter().enumerate() {
                t.push(vec![l.into(), h.into(), e.into(), self.per_layer[l].into()]);
            }
        }
        t
    }
}

impl Tabular for RopeCurve {
    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "layer",
            "delta",
            "alpha_v",
            "delta_alpha_v",
            "abs_delta_alpha_v",
            "g_v",
            "delta_g_v",
            "abs_delta_g_v",
            "samples",
        ]);
        for s in &self.layers {
            t.push(vec![
                s.layer.into(),
                self.delta.into(),
                s.alpha_v.into(),
                s.delta_alpha_v.into(),
                s.abs_delta_alpha_v.into(),
                s.g_v.into(),
                s.delta_g_v.into(),
                s.abs_delta_g_v.into(),
                s.samples.into(),
            ]);
        }
        t
    }
}

impl Tabular for NormProfile {
    fn table(&self) -> Table {
        let mut t = Table::new(&["layer", "vision_mean", "text_mean", "ratio"]);
        for l in &self.layers {
            t.push(vec![l.layer.into(), l.vision_mean.into(), l.text_mean.into(), l.ratio.into()]);
        }
        t
    }
}

impl Tabular for PsiReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["acc_original", "acc_permuted", "psi"]);
        t.push(vec![self.acc_original.into(), self.acc_permuted.into(), self.psi.into()]);
        t
    }
}

impl Tabular for AttentionShare {
    fn table(&self) -> Table {
        let mut t = Table::new(&["system", "vision", "text"]);
        t.push(vec![self.system.into(), self.vision.into(), self.text.into()]);
        t
    }
}

impl Tabular for AccuracyReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["category", "correct", "total", "accuracy"]);
        for r in self.table() {
            t.push(vec![r.category.as_str().into(), r.correct.into(), r.total.into(), r.accuracy.into()]);
        }
        t
    }
}

impl Tabular for AppendixReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["check", "metric", "value", "threshold", "pass"]);
        let rows: [(&str, &str, f64, &str, bool); 4] = [
            ("identity", "max_rel_error", self.identity.max_rel_error, "< 1e-5", self.identity_ok()),
            (
                "factorization",
                "aggregate_slope",
                self.factorization.aggregate_slope,
                "2 +/- 0.2",
                self.factorization_ok(),
            ),
            ("suppression", "min_ratio", self.suppression.min_ratio, ">= 0.009", self.suppression_ok()),
            ("suppression", "max_ratio", self.suppression.max_ratio, "<= 0.011", self.suppression_ok()),
        ];
        for (check, metric, value, threshold, pass) in rows {
            t.push(vec![check.into(), metric.into(), value.into(), threshold.into(), pass.into()]);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[test]
    fn nine_significant_digits() {
        let cases = [
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (1e-5, "1e-05"),
            (0.0001234, "0.0001234"),
            (-2.5, "-2.5"),
            (0.0, "0"),
            (100.0, "100"),
        ];
        for (x, want) in cases {
            assert_eq!(format_float(x), want, "{x}");
        }
    }

    #[test]
    fn empty_heatmap_is_header_only() {
        let h = CmbHeatmap {
            values: Matrix::zeros(0, 0),
            include_system: false,
            samples: 0,
        };
        assert_eq!(render_report(&h.table(), ReportFormat::Csv), "layer,head,cmb\n");
        assert_eq!(render_report(&h.table(), ReportFormat::Json), "[]\n");
    }

    #[test]
    fn csv_quoting_and_json_nulls() {
        let mut t = Table::new(&["name", "x"]);
        t.push(vec!["a,\"b\"".into(), f64::NAN.into()]);
        t.push(vec![Value::Null, 0.5.into()]);
        assert_eq!(render_report(&t, ReportFormat::Csv), "name,x\n\"a,\"\"b\"\"\",\n,0.5\n");
        let json = render_report(&t, ReportFormat::Json);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed[0]["x"], serde_json::Value::Null);
        assert_eq!(parsed[0]["name"], "a,\"b\"");
        assert_eq!(parsed[1]["x"], 0.5);
    }

    #[test]
    fn psi_row() {
        let r = PsiReport {
            acc_original: 0.8,
            acc_permuted: 0.6,
            psi: 0.25,
        };
        let mut buf = Vec::new();
        emit_report(&r, ReportFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "acc_original,acc_permuted,psi\n0.8,0.6,0.25\n");
    }
}
