//! Per-window metrics and their CSV / JSON forms.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Strategy;
use crate::error::{Error, Result};
use crate::remediation::{CouplingReport, NoiseEstimate};

/// CSV header, in column order.
pub const TRACE_COLUMNS: [&str; 11] = [
    "window",
    "strategy",
    "seen",
    "holdout_acc",
    "accepted",
    "rejected",
    "selflabel_precision",
    "pi0_hat",
    "pi1_hat",
    "coupling_agreement",
    "coupled",
];

/// One (window, strategy) row. Window 0 is the initial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub window: usize,
    pub strategy: Strategy,
    /// Stream instances delivered so far.
    pub seen: usize,
    pub holdout_acc: f64,
    /// Window instances that received a label this round.
    pub accepted: usize,
    /// Window instances left unlabeled this round.
    pub rejected: usize,
    /// Share of this round's self-labels (window and backlog) matching the truth.
    pub selflabel_precision: Option<f64>,
    pub pi0_hat: Option<f64>,
    pub pi1_hat: Option<f64>,
    pub coupling_agreement: Option<f64>,
    pub coupled: Option<bool>,
    /// Backlog instances accepted this round (JSON only).
    #[serde(default)]
    pub backlog_accepted: usize,
    /// Full estimate behind `pi*_hat` for rank pruning (JSON only).
    #[serde(default)]
    pub noise: Option<NoiseEstimate>,
    #[serde(default)]
    pub coupling: Option<CouplingReport>,
    /// Why remediation was skipped this round, if it was (JSON only).
    #[serde(default)]
    pub remediation_skipped: Option<String>,
}

/// Flat CSV row; field order is the column order.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    window: usize,
    strategy: Strategy,
    seen: usize,
    holdout_acc: f64,
    accepted: usize,
    rejected: usize,
    selflabel_precision: Option<f64>,
    pi0_hat: Option<f64>,
    pi1_hat: Option<f64>,
    coupling_agreement: Option<f64>,
    coupled: Option<bool>,
}

impl From<&TraceRecord> for CsvRow {
    fn from(r: &TraceRecord) -> Self {
        CsvRow {
            window: r.window,
            strategy: r.strategy,
            seen: r.seen,
            holdout_acc: r.holdout_acc,
            accepted: r.accepted,
            rejected: r.rejected,
            selflabel_precision: r.selflabel_precision,
            pi0_hat: r.pi0_hat,
            pi1_hat: r.pi1_hat,
            coupling_agreement: r.coupling_agreement,
            coupled: r.coupled,
        }
    }
}

impl From<CsvRow> for TraceRecord {
    fn from(r: CsvRow) -> Self {
        TraceRecord {
            window: r.window,
            strategy: r.strategy,
            seen: r.seen,
            holdout_acc: r.holdout_acc,
            accepted: r.accepted,
            rejected: r.rejected,
            selflabel_precision: r.selflabel_precision,
            pi0_hat: r.pi0_hat,
            pi1_hat: r.pi1_hat,
            coupling_agreement: r.coupling_agreement,
            coupled: r.coupled,
            backlog_accepted: 0,
            noise: None,
            coupling: None,
            remediation_skipped: None,
        }
    }
}

/// Metrics for every strategy over every window, plus the configuration
/// that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    /// The experiment configuration (including its seed), for provenance.
    pub config: serde_json::Value,
    /// Ordered by window, then by strategy in configuration order.
    pub records: Vec<TraceRecord>,
}

impl MetricsTrace {
    pub fn strategies(&self) -> Vec<Strategy> {
        let mut out: Vec<Strategy> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.strategy) {
                out.push(r.strategy);
            }
        }
        out
    }

    /// Records of one strategy, in window order.
    pub fn series(&self, strategy: Strategy) -> Vec<&TraceRecord> {
        self.records.iter().filter(|r| r.strategy == strategy).collect()
    }

    /// Holdout accuracy after the last window.
    pub fn final_accuracy(&self, strategy: Strategy) -> Option<f64> {
        self.series(strategy).last().map(|r| r.holdout_acc)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .has_headers(false)
            .from_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.records {
            w.serialize(CsvRow::from(r))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Parses a trace CSV; the header must match [`TRACE_COLUMNS`] exactly.
    /// The configuration and JSON-only fields are not part of the CSV.
    pub fn read_csv_from<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().ne(TRACE_COLUMNS) {
            let missing: Vec<&str> = TRACE_COLUMNS
                .iter()
                .copied()
                .filter(|c| !header.iter().any(|h| h == *c))
                .collect();
            return Err(Error::CsvFormat {
                line: 1,
                message: if missing.is_empty() {
                    format!("columns out of order, expected {}", TRACE_COLUMNS.join(","))
                } else {
                    format!("missing column(s) {}", missing.join(","))
                },
            });
        }
        let mut records = Vec::new();
        for (i, row) in r.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::CsvFormat {
                line: i + 2,
                message: e.to_string(),
            })?;
            records.push(row.into());
        }
        Ok(Self {
            config: serde_json::Value::Null,
            records,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(std::io::BufReader::new(file))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(window: usize, strategy: Strategy) -> TraceRecord {
        TraceRecord {
            window,
            strategy,
            seen: window * 100,
            holdout_acc: 0.875,
            accepted: 90,
            rejected: 10,
            selflabel_precision: Some(0.5),
            pi0_hat: None,
            pi1_hat: None,
            coupling_agreement: None,
            coupled: None,
            backlog_accepted: 0,
            noise: None,
            coupling: None,
            remediation_skipped: None,
        }
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let mut sumer = record(1, Strategy::Sumer);
        sumer.pi0_hat = Some(0.1);
        sumer.pi1_hat = Some(0.0);
        sumer.coupling_agreement = Some(0.99);
        sumer.coupled = Some(false);
        let trace = MetricsTrace {
            config: serde_json::Value::Null,
            records: vec![record(0, Strategy::Static), sumer],
        };
        let text = trace.to_csv().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_COLUMNS.join(","));
        assert_eq!(lines[1], "0,static,0,0.875,90,10,0.5,,,,");
        assert_eq!(lines[2], "1,sumer,100,0.875,90,10,0.5,0.1,0.0,0.99,false");
        assert!(!text.contains('\r'));
        let back = MetricsTrace::read_csv_from(text.as_bytes()).unwrap();
        assert_eq!(back.records, trace.records);
    }

    #[test]
    fn missing_column_is_named() {
        let err = MetricsTrace::read_csv_from("window,strategy\n0,sum\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("holdout_acc"), "{err}");
    }
}
