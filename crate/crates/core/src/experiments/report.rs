use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{median, Method};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "protocol",
    "param",
    "method",
    "seed",
    "train_rmse",
    "test_rmse",
    "iters",
    "seconds",
];

/// One fitted point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub protocol: String,
    /// Swept value (rank, density, noise level, or basis size).
    pub param: f64,
    pub method: Method,
    pub seed: u64,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub iters: usize,
    pub seconds: f64,
}

/// A published number kept next to the results for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub param: f64,
    pub method: Method,
    pub test_rmse: f64,
}

/// Median test RMSE over seeds for one (param, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub param: f64,
    pub method: Method,
    pub median_test_rmse: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: String,
    pub records: Vec<Record>,
    /// Fully resolved configuration; rerunning it reproduces the records.
    pub config: serde_json::Value,
    #[serde(default)]
    pub reference: Vec<ReferencePoint>,
}

impl ExperimentReport {
    pub fn new(protocol: impl Into<String>, config: serde_json::Value) -> Self {
        ExperimentReport {
            protocol: protocol.into(),
            records: Vec::new(),
            config,
            reference: Vec::new(),
        }
    }

    /// Per-cell medians, ordered by param then method.
    pub fn summaries(&self) -> Vec<Summary> {
        let mut cells: BTreeMap<(u64, Method), (f64, Vec<f64>)> = BTreeMap::new();
        for r in &self.records {
            let key = (ordered_bits(r.param), r.method);
            cells.entry(key).or_insert_with(|| (r.param, Vec::new())).1.push(r.test_rmse);
        }
        cells
            .into_iter()
            .map(|((_, method), (param, mut values))| Summary {
                param,
                method,
                seeds: values.len(),
                median_test_rmse: median(&mut values),
            })
            .collect()
    }

    /// Median test RMSE of one cell, if present.
    pub fn median(&self, param: f64, method: Method) -> Option<f64> {
        self.summaries()
            .into_iter()
            .find(|s| s.param == param && s.method == method)
            .map(|s| s.median_test_rmse)
    }
}

/// Maps a float to an integer with the same ordering.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Argument(format!("unknown report format '{other}'"))),
        }
    }
}

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_bytes(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &report.records {
        w.write_record([
            r.protocol.clone(),
            r.param.to_string(),
            r.method.name().to_string(),
            r.seed.to_string(),
            fmt_real(r.train_rmse),
            fmt_real(r.test_rmse),
            r.iters.to_string(),
            fmt_real(r.seconds),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Argument(format!("csv buffer: {e}")))
}

/// The report as it would be written to a file.
pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Csv => csv_bytes(report),
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report)?;
            v.push(b'\n');
            Ok(v)
        }
    }
}

/// Writes the report atomically: a temporary file in the target directory
/// is renamed into place.
pub fn emit_report(report: &ExperimentReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    crate::fsutil::write_atomic(path.as_ref(), &render_report(report, format)?)
}

/// Parses a CSV report back into records.
pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::parse(path, 1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = idx + 2;
        let field = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::parse(path, line, format!("{} '{}' is not a number", CSV_HEADER[i], field(i))))
        };
        let int = |i: usize| -> Result<u64> {
            field(i)
                .parse()
                .map_err(|_| Error::parse(path, line, format!("{} '{}' is not an integer", CSV_HEADER[i], field(i))))
        };
        out.push(Record {
            protocol: field(0).to_string(),
            param: num(1)?,
            method: field(2).parse().map_err(|e: Error| Error::parse(path, line, e.to_string()))?,
            seed: int(3)?,
            train_rmse: num(4)?,
            test_rmse: num(5)?,
            iters: int(6)? as usize,
            seconds: num(7)?,
        });
    }
    Ok(out)
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
