//! Serialization of results: JSON with full double precision and a
//! tab-separated scan table.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;

use crate::control::{GainScanResult, ScanPoint};
use crate::model::ValidationReport;
use crate::oracle::ComparisonReport;
use crate::roots::{Classification, MultiplierSet, StabilityVerdict};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReportError {
    #[error("json: {0}")]
    Json(String),
    #[error("scan table line {line}: {message}")]
    Table { line: usize, message: String },
}

/// Pretty JSON formatter writing every float with 17 significant digits.
struct Precise<'a>(PrettyFormatter<'a>);

impl Formatter for Precise<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| ReportError::Json(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| ReportError::Json(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub problem: String,
    pub dimension: usize,
    pub delay: f64,
    pub validation: ValidationReport,
    pub multipliers: MultiplierSet,
    pub verdict: StabilityVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutput {
    pub schema_version: u32,
    pub problem: String,
    pub multipliers: MultiplierSet,
    pub comparison: ComparisonReport,
}

pub fn parse_multiplier_set(text: &str) -> Result<MultiplierSet, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Json(e.to_string()))
}

pub fn parse_analysis(text: &str) -> Result<AnalysisReport, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Json(e.to_string()))
}

pub fn parse_scan_json(text: &str) -> Result<GainScanResult, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Json(e.to_string()))
}

pub const SCAN_HEADER: &str = "gain\tverdict\tmax_nontrivial_modulus\ttrivial_residual\terror";

/// One row of the scan table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub gain: f64,
    pub verdict: Option<Classification>,
    pub max_nontrivial_modulus: Option<f64>,
    pub trivial_residual: Option<f64>,
    pub error: Option<String>,
}

impl From<&ScanPoint> for ScanRow {
    fn from(p: &ScanPoint) -> Self {
        ScanRow {
            gain: p.gain,
            verdict: p.classification(),
            max_nontrivial_modulus: p.max_nontrivial_modulus,
            trivial_residual: p.trivial_residual,
            error: p.error.clone(),
        }
    }
}

fn verdict_name(c: Option<Classification>) -> &'static str {
    match c {
        Some(Classification::Stable) => "stable",
        Some(Classification::Unstable) => "unstable",
        Some(Classification::Inconclusive) => "inconclusive",
        None => "error",
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.16e}"))
}

pub fn write_scan_table(result: &GainScanResult) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for p in &result.points {
        let err = p.error.as_deref().unwrap_or("-").replace(['\t', '\n', '\r'], " ");
        out.push_str(&format!(
            "{:.16e}\t{}\t{}\t{}\t{}\n",
            p.gain,
            verdict_name(p.classification()),
            opt_num(p.max_nontrivial_modulus),
            opt_num(p.trivial_residual),
            err
        ));
    }
    out
}

pub fn parse_scan_table(text: &str) -> Result<Vec<ScanRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SCAN_HEADER => {}
        _ => return Err(ReportError::Table { line: 1, message: "missing header".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(ReportError::Table { line: line_no, message: format!("expected 5 fields, got {}", fields.len()) });
        }
        let num = |s: &str| -> Result<f64, ReportError> {
            s.parse::<f64>().map_err(|_| ReportError::Table { line: line_no, message: format!("bad number `{s}`") })
        };
        let opt = |s: &str| -> Result<Option<f64>, ReportError> { if s == "-" { Ok(None) } else { num(s).map(Some) } };
        let verdict = match fields[1] {
            "stable" => Some(Classification::Stable),
            "unstable" => Some(Classification::Unstable),
            "inconclusive" => Some(Classification::Inconclusive),
            "error" => None,
            other => return Err(ReportError::Table { line: line_no, message: format!("bad verdict `{other}`") }),
        };
        rows.push(ScanRow {
            gain: num(fields[0])?,
            verdict,
            max_nontrivial_modulus: opt(fields[2])?,
            trivial_residual: opt(fields[3])?,
            error: if fields[4] == "-" { None } else { Some(fields[4].to_string()) },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::C64;
    use crate::roots::{RootRecord, SearchDiagnostics, SearchRegion};

    fn sample() -> MultiplierSet {
        let r = RootRecord {
            z: C64::new(0.1 + 0.2, -1.0 / 3.0),
            multiplicity: 2,
            multiplier: C64::new(1.0, 0.0) / C64::new(0.1 + 0.2, -1.0 / 3.0),
            newton_residual: 1.234e-15,
        };
        MultiplierSet {
            roots: vec![r.clone()],
            trivial_root: None,
            region: SearchRegion::Disk { center: C64::new(0.0, 0.0), radius: 100.0 },
            total_count: 2,
            diagnostics: SearchDiagnostics { winding_integrals: 3, max_integrality_defect: 1e-9, ..Default::default() },
        }
    }

    #[test]
    fn multiplier_set_round_trip() {
        let s = sample();
        let text = to_json(&s).unwrap();
        assert_eq!(parse_multiplier_set(&text).unwrap(), s);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let text = to_json(&vec![0.1f64]).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
    }

    #[test]
    fn scan_table_round_trip() {
        let result = GainScanResult {
            grid: crate::control::GainGrid { start: 0.0, stop: 1.0, points: 2 },
            points: vec![
                ScanPoint { gain: 0.0, verdict: None, max_nontrivial_modulus: None, trivial_residual: None, error: Some("x\ty".into()) },
                ScanPoint { gain: 1.0, verdict: None, max_nontrivial_modulus: Some(0.5), trivial_residual: Some(1e-12), error: None },
            ],
            stable_intervals: vec![],
        };
        let rows = parse_scan_table(&write_scan_table(&result)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].error.as_deref(), Some("x y"));
        assert_eq!(rows[1].max_nontrivial_modulus, Some(0.5));
    }
}
