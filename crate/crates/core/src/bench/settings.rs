//! Layered run settings: command-line flags over a JSON config file over defaults.
//!
//! Every field is optional so two layers can be merged field by field; the
//! config file uses the same (snake_case) names as the long flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use super::data::{ColumnRange, SplitRule};
use super::report::ReportFormat;
use super::run::{DataSource, Methods, RunConfig};
use crate::combine::CombineOperator;
use crate::error::{ElmError, Result};
use crate::pipeline::{ChunkSize, Mode, PipelineConfig};

#[derive(Args, Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Subnetwork nodes per feature group (L).
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Neurons per subnetwork node (d).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Feedback damping of node refinement.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of every combined feature after the first.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// How subspace features are merged.
    #[arg(long, value_enum)]
    pub operator: Option<CombineOperator>,
    /// Ridge coefficient (C).
    #[arg(long)]
    pub coeff: Option<f64>,
    /// Classifier nodes (L_p).
    #[arg(long)]
    pub classifier_nodes: Option<usize>,
    /// Readout training mode.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Fixed chunk length, or `variable:MIN-MAX`.
    #[arg(long)]
    pub chunk_size: Option<ChunkSize>,
    /// Root seed of every random draw.
    #[arg(long)]
    pub seed: Option<u64>,

    /// CSV dataset, one sample per row. Synthetic blobs are used when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feature group column ranges, e.g. `0..8,8..16`.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<ColumnRange>>,
    /// Column holding integer class labels.
    #[arg(long)]
    pub label_col: Option<usize>,
    /// The CSV starts with a header row.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,

    /// Synthetic data: number of classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Synthetic data: samples per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Synthetic data: feature dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Synthetic data: standard deviation around each class mean.
    #[arg(long)]
    pub spread: Option<f64>,

    /// Training share of each split.
    #[arg(long, conflicts_with = "train_per_class")]
    pub split: Option<f64>,
    /// Training samples per class (stratified), instead of a fraction.
    #[arg(long)]
    pub train_per_class: Option<usize>,
    /// Split each class separately.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub stratified: Option<bool>,
    /// Number of independent split / fit / evaluate rounds.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Training modes to benchmark.
    #[arg(long, value_enum)]
    pub methods: Option<Methods>,
    /// Record wall-clock timings in the report.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
    /// Report format.
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Output file: the model for `train`, the report for `bench`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! layer {
    ($top:expr, $bottom:expr, $($field:ident),+) => {
        Settings { $($field: $top.$field.or($bottom.$field)),+ }
    };
}

impl Settings {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Settings> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Fields set in `self` win; the rest come from `fallback`.
    pub fn over(self, fallback: Settings) -> Settings {
        layer!(
            self, fallback, nodes, hidden, lambda, gamma, operator, coeff, classifier_nodes, mode,
            chunk_size, seed, data, groups, label_col, header, classes, per_class, dim, spread,
            split, train_per_class, stratified, repetitions, methods, timing, format, out
        )
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let d = PipelineConfig::default();
        PipelineConfig {
            nodes: self.nodes.unwrap_or(d.nodes),
            hidden: self.hidden.unwrap_or(d.hidden),
            lambda: self.lambda.unwrap_or(d.lambda),
            gamma: self.gamma.unwrap_or(d.gamma),
            operator: self.operator.unwrap_or(d.operator),
            coeff: self.coeff.unwrap_or(d.coeff),
            classifier_nodes: self.classifier_nodes.unwrap_or(d.classifier_nodes),
            mode: self.mode.unwrap_or(d.mode),
            chunk_size: self.chunk_size.unwrap_or(d.chunk_size),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    pub fn data_source(&self) -> Result<DataSource> {
        match &self.data {
            Some(path) => {
                let groups = self.groups.clone().ok_or_else(|| {
                    ElmError::InvalidParameter("--groups is required with --data".into())
                })?;
                let label_col = self.label_col.ok_or_else(|| {
                    ElmError::InvalidParameter("--label-col is required with --data".into())
                })?;
                Ok(DataSource::Csv {
                    path: path.clone(),
                    groups,
                    label_col,
                    has_header: self.header.unwrap_or(false),
                })
            }
            None => {
                let DataSource::Synth { classes, per_class, dim, spread } = DataSource::default()
                else {
                    unreachable!()
                };
                Ok(DataSource::Synth {
                    classes: self.classes.unwrap_or(classes),
                    per_class: self.per_class.unwrap_or(per_class),
                    dim: self.dim.unwrap_or(dim),
                    spread: self.spread.unwrap_or(spread),
                })
            }
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let d = RunConfig::default();
        let split = match (self.train_per_class, self.split) {
            (Some(_), Some(_)) => {
                return Err(ElmError::InvalidParameter(
                    "set either split or train_per_class, not both".into(),
                ))
            }
            (Some(n), None) => SplitRule::PerClass(n),
            (None, Some(f)) => SplitRule::Fraction(f),
            (None, None) => d.split,
        };
        let pipeline = self.pipeline_config();
        pipeline.validate()?;
        Ok(RunConfig {
            data: self.data_source()?,
            split,
            stratified: self.stratified.unwrap_or(d.stratified),
            repetitions: self.repetitions.unwrap_or(d.repetitions),
            methods: self.methods.unwrap_or(d.methods),
            seed: pipeline.seed,
            pipeline,
            timing: self.timing.unwrap_or(d.timing),
            out: self.out.clone(),
            format: self.format.unwrap_or(d.format),
        })
    }
}
