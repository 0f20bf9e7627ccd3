//! Repeated split → fit → evaluate experiments.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{self, ColumnRange, Dataset, SplitRule};
use super::report::{self, MetricsReport, ReportFormat, RepetitionEntry};
use crate::error::{ElmError, Result};
use crate::pipeline::{self, Mode, PipelineConfig};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synth {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
    },
    Csv {
        path: PathBuf,
        groups: Vec<ColumnRange>,
        label_col: usize,
        has_header: bool,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth {
            classes: 3,
            per_class: 200,
            dim: 16,
            spread: 0.2,
        }
    }
}

impl DataSource {
    pub fn name(&self) -> String {
        match self {
            DataSource::Synth { classes, per_class, dim, spread } => {
                format!("blobs-c{classes}-n{per_class}-d{dim}-s{spread}")
            }
            DataSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSource::Synth { classes, per_class, dim, spread } => {
                let (g, labels) = data::synth_blobs(*classes, *per_class, *dim, *spread, seed)?;
                // interleave the classes so the set can be streamed as generated
                let mut order: Vec<usize> = (0..labels.len()).collect();
                order.shuffle(&mut seed::rng(seed::derive(seed, ORDER_STREAM)));
                Dataset { groups: vec![g], labels }.subset(&order)
            }
            DataSource::Csv { path, groups, label_col, has_header } => {
                let (groups, labels) = data::load_csv(path, groups, Some(*label_col), *has_header)?;
                Ok(Dataset { groups, labels })
            }
        }
    }
}

/// Which readouts to benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Methods {
    Batch,
    Sequential,
    Both,
}

impl Methods {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            Methods::Batch => vec![Mode::Batch],
            Methods::Sequential => vec![Mode::Sequential],
            Methods::Both => vec![Mode::Batch, Mode::Sequential],
        }
    }
}

/// Report label of each training mode.
pub fn method_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Batch => "hierarchical",
        Mode::Sequential => "oselm-combined",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub split: SplitRule,
    pub stratified: bool,
    pub repetitions: usize,
    pub methods: Methods,
    pub pipeline: PipelineConfig,
    /// Root of every random draw in the run.
    pub seed: u64,
    /// Record wall-clock timings. Off by default so reports are reproducible byte for byte.
    pub timing: bool,
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::default(),
            split: SplitRule::Fraction(0.5),
            stratified: true,
            repetitions: 1,
            methods: Methods::Both,
            pipeline: PipelineConfig::default(),
            seed: 0,
            timing: false,
            out: None,
            format: ReportFormat::Json,
        }
    }
}

const DATA_STREAM: u64 = 0xDA7A;
const ORDER_STREAM: u64 = 0x0DE2;

/// Runs every repetition and method, writing the report when `cfg.out` is set.
pub fn run_benchmark(cfg: &RunConfig) -> Result<MetricsReport> {
    if cfg.repetitions == 0 {
        return Err(ElmError::InvalidParameter("repetitions must be >= 1".into()));
    }
    let dataset = cfg.data.load(seed::derive(cfg.seed, DATA_STREAM))?;
    let name = cfg.data.name();
    let classes = dataset.classes();
    let mut entries = Vec::new();
    for rep in 0..cfg.repetitions {
        let rep_seed = seed::derive(cfg.seed, rep as u64);
        run_repetition(cfg, &dataset, classes, rep, rep_seed, &name, &mut entries)
            .map_err(|e| ElmError::Repetition { index: rep, source: Box::new(e) })?;
    }
    let report = MetricsReport::from_entries(&name, entries);
    if let Some(path) = &cfg.out {
        report::emit_report(&report, path, cfg.format)?;
    }
    Ok(report)
}

fn run_repetition(
    cfg: &RunConfig,
    dataset: &Dataset,
    classes: usize,
    rep: usize,
    rep_seed: u64,
    name: &str,
    entries: &mut Vec<RepetitionEntry>,
) -> Result<()> {
    let parts = data::split(dataset, cfg.split, rep_seed, cfg.stratified)?;
    let t_train = data::one_hot(&parts.train.labels, classes)?;
    let t_test = data::one_hot(&parts.test.labels, classes)?;
    for mode in cfg.methods.modes() {
        let pcfg = PipelineConfig {
            mode,
            seed: rep_seed,
            ..cfg.pipeline.clone()
        };
        let start = Instant::now();
        let model = pipeline::fit(&parts.train.groups, &t_train, &pcfg)?;
        let train_seconds = start.elapsed().as_secs_f64();
        let mut ev = model.evaluate(&parts.test.groups, &t_test)?;
        if cfg.timing {
            ev.train_seconds = Some(train_seconds);
        } else {
            ev.infer_seconds = None;
        }
        entries.push(RepetitionEntry::new(method_name(mode), name, rep, &ev));
    }
    Ok(())
}
