//! Stable serializations of an [`EvalReport`].
//!
//! - `text`: `key: value` lines; undefined metrics print as `n/a`.
//! - `csv`: the precision/recall sweep, header `confidence,recall,precision`.
//! - `records`: one JSON object on a single line.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{EvalReport, PrPoint};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("unknown report format '{0}' (expected text, csv or records)")]
    UnknownFormat(String),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Records,
}

impl FromStr for ReportFormat {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "records" => Ok(Self::Records),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

pub const CSV_HEADER: &str = "confidence,recall,precision";

fn metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

/// One-line JSON document emitted by the `records` format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub model: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

pub fn render_text(report: &EvalReport, model: &str) -> String {
    let c = &report.counts;
    let mut out = String::new();
    let _ = writeln!(out, "model: {model}");
    let _ = writeln!(out, "PID_mAP: {}", metric(report.pid_map));
    let _ = writeln!(out, "PID_Acc: {}", metric(report.pid_acc));
    for ap in &report.pid_ap {
        let _ = writeln!(out, "PID_AP@p_t={}: {}", ap.p_t, metric(ap.ap));
    }
    let _ = writeln!(
        out,
        "acc_formula: {}",
        match report.acc_formula {
            crate::metrics::AccFormula::Literal => "literal",
            crate::metrics::AccFormula::Corrected => "corrected",
        }
    );
    let _ = writeln!(out, "iou_threshold: {}", report.iou_threshold);
    let _ = writeln!(out, "c_t: {}", report.c_t);
    let _ = writeln!(out, "p_t: {}", report.p_t);
    let _ = writeln!(out, "tp: {}", c.tp);
    let _ = writeln!(out, "fp: {}", c.fp);
    let _ = writeln!(out, "fn: {}", c.fn_);
    let _ = writeln!(out, "tn: {}", c.tn);
    let _ = writeln!(out, "total: {}", c.total);
    out
}

/// Floats use Rust's shortest round-trip formatting, so parsing the output
/// recovers every point exactly.
pub fn render_csv(points: &[PrPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.confidence, p.recall, p.precision);
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<PrPoint>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => {
            return Err(ReportError::Csv {
                line: 1,
                message: format!("expected header '{CSV_HEADER}'"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let err = |message: String| ReportError::Csv { line: i + 1, message };
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
            Ok(PrPoint {
                confidence: num(fields[0])?,
                recall: num(fields[1])?,
                precision: num(fields[2])?,
            })
        })
        .collect()
}

pub fn render_records(report: &EvalReport, model: &str) -> String {
    let record = ReportRecord {
        model: model.to_string(),
        report: report.clone(),
    };
    let mut s = serde_json::to_string(&record).expect("report serializes");
    s.push('\n');
    s
}

pub fn emit_report(report: &EvalReport, model: &str, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Text => render_text(report, model),
        ReportFormat::Csv => render_csv(&report.pr_curve),
        ReportFormat::Records => render_records(report, model),
    }
    .into_bytes()
}
