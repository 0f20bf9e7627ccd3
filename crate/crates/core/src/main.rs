use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hoselm::bench::{self, ColumnRange, Dataset, Settings};
use hoselm::{pipeline, HOselmModel, Result};

#[derive(Parser)]
#[command(name = "hoselm", version, about = "Hierarchical online-sequential ELM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a whole dataset and save it.
    Train {
        /// JSON config file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Classify a CSV dataset with a saved model.
    Predict {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// CSV dataset, one sample per row.
        #[arg(long)]
        data: PathBuf,
        /// Feature group column ranges, in training order.
        #[arg(long, value_delimiter = ',', required = true)]
        groups: Vec<ColumnRange>,
        /// When given, also report metrics against this label column.
        #[arg(long)]
        label_col: Option<usize>,
        /// The CSV starts with a header row.
        #[arg(long)]
        header: bool,
        /// Predictions CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated split / fit / evaluate runs.
    Bench {
        /// JSON config file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Write a synthetic Gaussian-blob dataset as CSV.
    Synth {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0.2)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn layered(config: Option<PathBuf>, flags: Settings) -> Result<Settings> {
    Ok(match config {
        Some(path) => flags.over(Settings::from_file(path)?),
        None => flags,
    })
}

fn train(settings: Settings) -> Result<()> {
    let cfg = settings.pipeline_config();
    let data = settings.data_source()?.load(cfg.seed)?;
    let t = bench::one_hot(&data.labels, data.classes())?;
    let model = pipeline::fit(&data.groups, &t, &cfg)?;
    let ev = model.evaluate(&data.groups, &t)?;
    eprintln!(
        "trained {} model on {} samples: training mean per-class rate {:.4}",
        cfg.mode,
        data.samples(),
        ev.mean_per_class_rate
    );
    let out = settings.out.unwrap_or_else(|| PathBuf::from("model.json"));
    model.save(&out)?;
    eprintln!("model written to {}", out.display());
    Ok(())
}

fn predict(
    model: PathBuf,
    data: PathBuf,
    groups: Vec<ColumnRange>,
    label_col: Option<usize>,
    header: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    let model = HOselmModel::load(model)?;
    let (groups, labels) = bench::load_csv(data, &groups, label_col, header)?;
    let predicted = model.predict(&groups)?;

    let mut text = String::from("sample,predicted\n");
    for (i, p) in predicted.iter().enumerate() {
        text.push_str(&format!("{i},{p}\n"));
    }
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    if label_col.is_some() {
        let data = Dataset { groups, labels };
        let t = bench::one_hot(&data.labels, model.classes)?;
        let ev = model.evaluate(&data.groups, &t)?;
        eprintln!("{}", serde_json::to_string_pretty(&ev)?);
    }
    Ok(())
}

fn run_bench(settings: Settings) -> Result<()> {
    let cfg = settings.run_config()?;
    let report = bench::run_benchmark(&cfg)?;
    if cfg.out.is_none() {
        print!("{}", bench::report::render(&report, cfg.format)?);
    }
    for s in &report.summary {
        eprintln!(
            "{:<16} mean per-class rate {:.4} ± {:.4} over {} repetition(s)",
            s.method, s.mean_per_class_rate, s.std_per_class_rate, s.repetitions
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, settings } => train(layered(config, settings)?),
        Command::Predict { model, data, groups, label_col, header, out } => {
            predict(model, data, groups, label_col, header, out)
        }
        Command::Bench { config, settings } => run_bench(layered(config, settings)?),
        Command::Synth { classes, per_class, dim, spread, seed, out } => {
            let (g, labels) = bench::synth_blobs(classes, per_class, dim, spread, seed)?;
            bench::write_csv(&out, &Dataset { groups: vec![g], labels })?;
            eprintln!("wrote {} samples to {}", classes * per_class, out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
