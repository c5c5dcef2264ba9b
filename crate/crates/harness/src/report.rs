use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use edgesplit_core::policy::Strategy;
use edgesplit_core::{InferenceRequest, RequestOutcome};

use crate::metrics::{violation_count_pct, violation_pct, MetricsError};

pub const CSV_HEADER: [&str; 9] = [
    "strategy",
    "request_id",
    "batch",
    "perf_req",
    "acc_req",
    "achieved_perf",
    "achieved_acc",
    "perf_viol",
    "acc_viol",
];

/// Outcomes of one strategy, aligned with the scenario's request queue.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub outcomes: Vec<RequestOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub requests: usize,
    /// Time-weighted violation shares in percent.
    pub perf_violation_pct: f64,
    pub acc_violation_pct: f64,
    /// Per-request violation shares in percent.
    pub perf_violation_count_pct: f64,
    pub acc_violation_count_pct: f64,
    pub mean_throughput: f64,
    pub mean_accuracy: f64,
}

impl StrategySummary {
    fn new(run: &StrategyRun, requests: &[InferenceRequest]) -> Result<Self, MetricsError> {
        let (perf_violation_pct, acc_violation_pct) = violation_pct(&run.outcomes, requests)?;
        let (perf_violation_count_pct, acc_violation_count_pct) =
            violation_count_pct(&run.outcomes, requests)?;
        let mean = |f: fn(&RequestOutcome) -> f64| {
            if run.outcomes.is_empty() {
                0.0
            } else {
                run.outcomes.iter().map(f).sum::<f64>() / run.outcomes.len() as f64
            }
        };
        Ok(Self {
            strategy: run.strategy,
            requests: run.outcomes.len(),
            perf_violation_pct,
            acc_violation_pct,
            perf_violation_count_pct,
            acc_violation_count_pct,
            mean_throughput: mean(|o| o.achieved_throughput),
            mean_accuracy: mean(|o| o.empirical_top5),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scenario: String,
    pub runs: Vec<StrategyRun>,
    pub summaries: Vec<StrategySummary>,
}

impl Report {
    pub fn new(
        scenario: impl Into<String>,
        requests: &[InferenceRequest],
        mut runs: Vec<StrategyRun>,
    ) -> Result<Self, MetricsError> {
        // completion order follows the queue, but align explicitly
        for run in &mut runs {
            run.outcomes.sort_by_key(|o| requests.iter().position(|r| r.id == o.request_id));
        }
        let summaries = runs
            .iter()
            .map(|r| StrategySummary::new(r, requests))
            .collect::<Result<_, _>>()?;
        Ok(Self { scenario: scenario.into(), runs, summaries })
    }

    pub fn run(&self, strategy: Strategy) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.strategy == strategy)
    }

    pub fn summary(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    pub fn rows(&self) -> usize {
        self.runs.iter().map(|r| r.outcomes.len()).sum()
    }
}

fn float(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.4}")
    }
}

/// Writes one row per (strategy, request) in a fixed column order.
pub fn write_csv(report: &Report, out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for run in &report.runs {
        for o in &run.outcomes {
            w.write_record([
                run.strategy.name().to_string(),
                o.request_id.to_string(),
                o.batch.to_string(),
                float(o.perf_req),
                float(o.acc_req),
                float(o.achieved_throughput),
                float(o.empirical_top5),
                u8::from(o.perf_violation).to_string(),
                u8::from(o.acc_violation).to_string(),
            ])?;
        }
    }
    w.flush()
}

pub fn emit_csv(report: &Report, path: impl AsRef<Path>) -> io::Result<()> {
    let file = File::create(path)?;
    write_csv(report, io::BufWriter::new(file))
}

pub fn csv_string(report: &Report) -> String {
    let mut buf = Vec::new();
    write_csv(report, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Per-strategy summary as an aligned text table.
pub fn emit_summary(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", report.scenario);
    let _ = writeln!(
        s,
        "{:<13} {:>8} {:>10} {:>10} {:>11} {:>11} {:>10} {:>9}",
        "strategy", "requests", "perf_viol%", "acc_viol%", "perf_viol#%", "acc_viol#%", "mean_perf", "mean_acc"
    );
    for x in &report.summaries {
        let _ = writeln!(
            s,
            "{:<13} {:>8} {:>10.2} {:>10.2} {:>11.2} {:>11.2} {:>10} {:>9.4}",
            x.strategy.name(),
            x.requests,
            x.perf_violation_pct,
            x.acc_violation_pct,
            x.perf_violation_count_pct,
            x.acc_violation_count_pct,
            if x.mean_throughput.is_finite() { format!("{:.3}", x.mean_throughput) } else { "inf".into() },
            x.mean_accuracy,
        );
    }
    s
}
