//! Benchmark report: one entry per (repetition, method), aggregated per method.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::Evaluation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionEntry {
    pub method: String,
    pub dataset: String,
    pub repetition: usize,
    pub mean_per_class_rate: f64,
    pub accuracy: f64,
    pub train_seconds: Option<f64>,
    pub infer_seconds: Option<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub absent_classes: Vec<usize>,
}

impl RepetitionEntry {
    pub fn new(method: &str, dataset: &str, repetition: usize, ev: &Evaluation) -> Self {
        RepetitionEntry {
            method: method.to_string(),
            dataset: dataset.to_string(),
            repetition,
            mean_per_class_rate: ev.mean_per_class_rate,
            accuracy: ev.accuracy,
            train_seconds: ev.train_seconds,
            infer_seconds: ev.infer_seconds,
            confusion: ev.confusion.counts.clone(),
            absent_classes: ev.absent_classes.clone(),
        }
    }
}

/// Statistics of one method over all repetitions. `std` is the sample
/// standard deviation (zero for a single repetition).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub repetitions: usize,
    pub mean_per_class_rate: f64,
    pub std_per_class_rate: f64,
    pub min_per_class_rate: f64,
    pub max_per_class_rate: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub entries: Vec<RepetitionEntry>,
    pub summary: Vec<MethodSummary>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MetricsReport {
    /// Builds the report and its per-method aggregates, methods in first-seen order.
    pub fn from_entries(dataset: &str, entries: Vec<RepetitionEntry>) -> Self {
        let mut methods: Vec<&str> = Vec::new();
        for e in &entries {
            if !methods.contains(&e.method.as_str()) {
                methods.push(&e.method);
            }
        }
        let summary = methods
            .iter()
            .map(|&method| {
                let rows: Vec<&RepetitionEntry> =
                    entries.iter().filter(|e| e.method == method).collect();
                let rates: Vec<f64> = rows.iter().map(|e| e.mean_per_class_rate).collect();
                let accs: Vec<f64> = rows.iter().map(|e| e.accuracy).collect();
                let (mean_rate, std_rate) = mean_std(&rates);
                let (mean_acc, std_acc) = mean_std(&accs);
                MethodSummary {
                    method: method.to_string(),
                    repetitions: rows.len(),
                    mean_per_class_rate: mean_rate,
                    std_per_class_rate: std_rate,
                    min_per_class_rate: rates.iter().copied().fold(f64::INFINITY, f64::min),
                    max_per_class_rate: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean_accuracy: mean_acc,
                    std_accuracy: std_acc,
                }
            })
            .collect();
        MetricsReport {
            dataset: dataset.to_string(),
            entries,
            summary,
        }
    }

    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const CSV_HEADER: &str =
    "method,dataset,repetition,mean_per_class_rate,accuracy,train_seconds,infer_seconds";

fn seconds(v: Option<f64>) -> String {
    v.map(|s| format!("{s:.6}")).unwrap_or_default()
}

pub fn render_csv(r: &MetricsReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for e in &r.entries {
        let _ = writeln!(
            out,
            "{},{},{},{:.9},{:.9},{},{}",
            e.method,
            e.dataset,
            e.repetition,
            e.mean_per_class_rate,
            e.accuracy,
            seconds(e.train_seconds),
            seconds(e.infer_seconds),
        );
    }
    out
}

pub fn render(r: &MetricsReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Json => serde_json::to_string_pretty(r)? + "\n",
        ReportFormat::Csv => render_csv(r),
    })
}

pub fn emit_report(r: &MetricsReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    std::fs::write(path, render(r, format)?)?;
    Ok(())
}
