//! Trace export to CSV and JSONL, and the matching importers.
//!
//! Both formats carry one record per recorded iteration with identical
//! keys, preceded by a schema comment line. Floats are written in the
//! shortest round-trip representation, so export → import is exact.

use super::RunTrace;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const TRACE_SCHEMA: &str = "as3cma-trace v1";
const CSV_HEADER: &str = "trial,iteration,fcalls,F_mt,sum_p,subset_size,tau,restarts,outcome";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// One exported iteration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub trial: usize,
    pub iteration: u64,
    pub fcalls: u64,
    #[serde(rename = "F_mt")]
    pub f_mt: f64,
    pub sum_p: f64,
    pub subset_size: usize,
    pub tau: Option<f64>,
    pub restarts: u32,
    pub outcome: String,
}

/// Flattens traces into rows; every row carries its trial's final outcome.
pub fn trace_rows(traces: &[RunTrace]) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for trace in traces {
        let outcome = trace.outcome.outcome.to_string();
        for rec in &trace.records {
            rows.push(TraceRow {
                trial: trace.trial,
                iteration: rec.iteration,
                fcalls: rec.fcalls,
                f_mt: rec.f_full_mean,
                sum_p: rec.sum_p,
                subset_size: rec.subset_size,
                tau: rec.tau,
                restarts: rec.restarts,
                outcome: outcome.clone(),
            });
        }
    }
    rows
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn export_csv(traces: &[RunTrace], path: &Path) -> Result<(), ExportError> {
    write_csv_rows(&trace_rows(traces), path)
}

pub fn write_csv_rows(rows: &[TraceRow], path: &Path) -> Result<(), ExportError> {
    let mut out = String::new();
    out.push_str(&format!("# {TRACE_SCHEMA}\n{CSV_HEADER}\n"));
    for r in rows {
        let tau = match r.tau {
            Some(t) => format!("{t}"),
            None => "nan".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.trial, r.iteration, r.fcalls, r.f_mt, r.sum_p, r.subset_size, tau, r.restarts, r.outcome
        ));
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(out.as_bytes()).map_err(io_err(path))
}

pub fn export_jsonl(traces: &[RunTrace], path: &Path) -> Result<(), ExportError> {
    write_jsonl_rows(&trace_rows(traces), path)
}

pub fn write_jsonl_rows(rows: &[TraceRow], path: &Path) -> Result<(), ExportError> {
    let mut out = String::new();
    out.push_str(&format!("# {TRACE_SCHEMA}\n"));
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("row serialization cannot fail"));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(out.as_bytes()).map_err(io_err(path))
}

/// Reads rows back from either format; the content is sniffed line by line
/// (comment lines skipped, `{`-prefixed lines parsed as JSON, the CSV
/// header recognized, everything else parsed as CSV fields).
///
/// Floats written by the exporters round-trip exactly.
pub fn read_rows(path: &Path) -> Result<Vec<TraceRow>, ExportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let perr = |line: usize, message: String| ExportError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == CSV_HEADER {
            continue;
        }
        if line.starts_with('{') {
            let row: TraceRow =
                serde_json::from_str(line).map_err(|e| perr(idx + 1, e.to_string()))?;
            rows.push(row);
        } else {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(perr(idx + 1, format!("expected 9 CSV fields, got {}", fields.len())));
            }
            let parse = |what: &str, v: &str| perr(idx + 1, format!("bad {what}: `{v}`"));
            let tau_field = fields[6];
            let tau = if tau_field.eq_ignore_ascii_case("nan") {
                None
            } else {
                Some(tau_field.parse::<f64>().map_err(|_| parse("tau", tau_field))?)
            };
            rows.push(TraceRow {
                trial: fields[0].parse().map_err(|_| parse("trial", fields[0]))?,
                iteration: fields[1].parse().map_err(|_| parse("iteration", fields[1]))?,
                fcalls: fields[2].parse().map_err(|_| parse("fcalls", fields[2]))?,
                f_mt: fields[3].parse().map_err(|_| parse("F_mt", fields[3]))?,
                sum_p: fields[4].parse().map_err(|_| parse("sum_p", fields[4]))?,
                subset_size: fields[5].parse().map_err(|_| parse("subset_size", fields[5]))?,
                tau,
                restarts: fields[7].parse().map_err(|_| parse("restarts", fields[7]))?,
                outcome: fields[8].to_string(),
            });
        }
    }
    Ok(rows)
}
