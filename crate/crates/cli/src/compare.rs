//! Final-accuracy summaries of trace files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use sumer::{MetricsTrace, Strategy};

#[derive(Debug, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub final_accuracy: f64,
    /// `None` when the trace has no `static` lane.
    pub delta_vs_static: Option<f64>,
    pub delta_vs_sum: Option<f64>,
    /// Windows whose remediation reported coupling.
    pub coupled_windows: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct TraceSummary {
    pub trace: PathBuf,
    pub strategies: Vec<StrategySummary>,
}

/// Reads a trace from its CSV or (by extension) JSON form.
fn load(path: &Path) -> Result<MetricsTrace> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(MetricsTrace::from_json(&text)?)
    } else {
        Ok(MetricsTrace::read_csv(path)?)
    }
}

pub fn summarize(path: &Path, trace: &MetricsTrace) -> TraceSummary {
    let base = |s| trace.final_accuracy(s);
    let strategies = trace
        .strategies()
        .into_iter()
        .map(|s| {
            let acc = base(s).expect("strategy has records");
            StrategySummary {
                strategy: s,
                final_accuracy: acc,
                delta_vs_static: base(Strategy::Static).map(|b| acc - b),
                delta_vs_sum: base(Strategy::Sum).map(|b| acc - b),
                coupled_windows: trace
                    .series(s)
                    .iter()
                    .filter(|r| r.coupled == Some(true))
                    .map(|r| r.window)
                    .collect(),
            }
        })
        .collect();
    TraceSummary {
        trace: path.to_path_buf(),
        strategies,
    }
}

fn delta(d: Option<f64>) -> String {
    d.map_or_else(|| "-".into(), |d| format!("{d:+.4}"))
}

pub fn table(summaries: &[TraceSummary]) -> String {
    let mut out = String::new();
    for s in summaries {
        writeln!(out, "{}", s.trace.display()).unwrap();
        writeln!(out, "  {:<18} {:>8} {:>10} {:>10}  coupled", "strategy", "final", "vs static", "vs sum").unwrap();
        for r in &s.strategies {
            let coupled = if r.coupled_windows.is_empty() {
                "-".to_string()
            } else {
                format!("windows {:?}", r.coupled_windows)
            };
            writeln!(
                out,
                "  {:<18} {:>8.4} {:>10} {:>10}  {coupled}",
                r.strategy.as_str(),
                r.final_accuracy,
                delta(r.delta_vs_static),
                delta(r.delta_vs_sum),
            )
            .unwrap();
        }
    }
    out
}

pub fn run(paths: &[PathBuf], json: bool) -> Result<()> {
    let summaries = paths
        .iter()
        .map(|p| Ok(summarize(p, &load(p).with_context(|| format!("loading trace {}", p.display()))?)))
        .collect::<Result<Vec<_>>>()?;
    if json {
        println!("{}", serde_json::to_string_pretty(&summaries)?);
    } else {
        print!("{}", table(&summaries));
    }
    Ok(())
}
