//! Benchmark harness: data loading and generation, experiment runs, reports.

pub mod data;
pub mod report;
pub mod run;
pub mod settings;

pub use data::{
    blob_means, load_csv, one_hot, split, synth_blobs, write_csv, ColumnRange, Dataset, Split,
    SplitRule,
};
pub use report::{emit_report, MetricsReport, ReportFormat, RepetitionEntry};
pub use run::{method_name, run_benchmark, DataSource, Methods, RunConfig};
pub use settings::Settings;
