//! Dataset plumbing: CSV ingestion, synthetic blobs, one-hot targets, splits.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::linalg::Matrix;
use crate::pipeline::FeatureGroup;
use crate::seed;

/// Feature groups plus integer labels over one sample axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub groups: Vec<FeatureGroup>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    /// Number of classes implied by the largest label.
    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let groups = self
            .groups
            .iter()
            .map(|g| Ok(FeatureGroup::new(g.name.clone(), g.x.select_columns(idx)?)))
            .collect::<Result<_>>()?;
        Ok(Dataset {
            groups,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

/// Half-open column range `a..b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ColumnRange(pub Range<usize>);

impl FromStr for ColumnRange {
    type Err = ElmError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ElmError::InvalidParameter(format!("cannot parse column range '{s}' (want a..b)"));
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let r = a.trim().parse().map_err(|_| bad())?..b.trim().parse().map_err(|_| bad())?;
        if r.is_empty() {
            return Err(bad());
        }
        Ok(ColumnRange(r))
    }
}

impl TryFrom<String> for ColumnRange {
    type Error = ElmError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ColumnRange> for String {
    fn from(r: ColumnRange) -> String {
        r.to_string()
    }
}

impl fmt::Display for ColumnRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.0.start, self.0.end)
    }
}

fn parse_label(field: &str, row: usize, col: usize) -> Result<usize> {
    let field = field.trim();
    if let Ok(v) = field.parse::<usize>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 => Ok(v as usize),
        _ => Err(ElmError::Parse {
            row,
            col,
            msg: format!("label '{field}' is not a non-negative integer"),
        }),
    }
}

/// Reads one sample per row. Each range becomes a feature group (samples as
/// columns); `label_col`, when given, holds integer class labels.
pub fn load_csv(
    path: impl AsRef<Path>,
    group_ranges: &[ColumnRange],
    label_col: Option<usize>,
    has_header: bool,
) -> Result<(Vec<FeatureGroup>, Vec<usize>)> {
    if group_ranges.is_empty() {
        return Err(ElmError::InvalidParameter("no feature group ranges given".into()));
    }
    let mut sorted: Vec<&Range<usize>> = group_ranges.iter().map(|r| &r.0).collect();
    sorted.sort_by_key(|r| r.start);
    if sorted.windows(2).any(|w| w[0].end > w[1].start) {
        return Err(ElmError::InvalidParameter("feature group ranges overlap".into()));
    }
    if let Some(l) = label_col {
        if group_ranges.iter().any(|r| r.0.contains(&l)) {
            return Err(ElmError::InvalidParameter(format!(
                "label column {l} lies inside a feature range"
            )));
        }
    }
    let needed = sorted
        .last()
        .map(|r| r.end)
        .unwrap_or(0)
        .max(label_col.map_or(0, |l| l + 1));

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); group_ranges.len()];
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(ElmError::Format(format!(
                "row {row} has {} fields, expected {w}",
                record.len()
            )));
        }
        if w < needed {
            return Err(ElmError::Format(format!(
                "rows have {w} fields but column {} was requested",
                needed - 1
            )));
        }
        for (g, range) in group_ranges.iter().enumerate() {
            for col in range.0.clone() {
                let v: f64 = record[col].parse().map_err(|_| ElmError::Parse {
                    row,
                    col,
                    msg: format!("'{}' is not a number", &record[col]),
                })?;
                if !v.is_finite() {
                    return Err(ElmError::Parse { row, col, msg: "non-finite value".into() });
                }
                columns[g].push(v);
            }
        }
        if let Some(l) = label_col {
            labels.push(parse_label(&record[l], row, l)?);
        }
    }
    let samples = columns[0].len() / group_ranges[0].0.len();
    if samples == 0 {
        return Err(ElmError::Format("no data rows".into()));
    }
    let groups = group_ranges
        .iter()
        .zip(columns)
        .enumerate()
        .map(|(g, (range, data))| {
            // data is sample-major, i.e. the row-major layout of the transpose
            let xt = Matrix::new(samples, range.0.len(), data)?;
            Ok(FeatureGroup::new(format!("g{g}[{range}]"), xt.transpose()))
        })
        .collect::<Result<_>>()?;
    Ok((groups, labels))
}

/// Writes one sample per row: every group's features in order, then the label.
/// Values carry 17 significant digits so they read back bit-exactly.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..data.samples() {
        let mut fields = Vec::new();
        for g in &data.groups {
            for r in 0..g.x.rows() {
                fields.push(format!("{:.16e}", g.x.get(r, i)));
            }
        }
        fields.push(data.labels[i].to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// `t × M` indicator matrix of the labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Matrix> {
    if classes == 0 || labels.is_empty() {
        return Err(ElmError::InvalidInput("one_hot needs labels and at least one class".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(ElmError::InvalidInput(format!(
            "label {bad} outside {classes} classes"
        )));
    }
    Matrix::from_fn(classes, labels.len(), |r, c| if labels[c] == r { 1.0 } else { 0.0 })
}

/// How many samples go to the training partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Share of the samples (of each class, when stratified).
    Fraction(f64),
    /// Fixed count per class; always stratified.
    PerClass(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Random train/test partition. Training samples come out in shuffled order
/// (ready to be streamed); test samples keep their original order.
pub fn split(data: &Dataset, rule: SplitRule, seed: u64, stratified: bool) -> Result<Split> {
    let m = data.samples();
    let mut rng = seed::rng(seed);
    let mut train_idx = match rule {
        SplitRule::Fraction(f) if !(f > 0.0 && f < 1.0) => {
            return Err(ElmError::InvalidParameter(format!("split fraction must lie in (0, 1), got {f}")));
        }
        SplitRule::PerClass(0) => {
            return Err(ElmError::InvalidParameter("per-class count must be >= 1".into()));
        }
        SplitRule::Fraction(f) if !stratified => {
            let mut all: Vec<usize> = (0..m).collect();
            all.shuffle(&mut rng);
            all.truncate((f * m as f64).round() as usize);
            all
        }
        _ => {
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &l) in data.labels.iter().enumerate() {
                by_class.entry(l).or_default().push(i);
            }
            let mut picked = Vec::new();
            for (class, mut members) in by_class {
                let take = match rule {
                    SplitRule::PerClass(n) => n,
                    SplitRule::Fraction(f) => (f * members.len() as f64).round() as usize,
                };
                if take > members.len() {
                    return Err(ElmError::InvalidParameter(format!(
                        "class {class} has {} samples, cannot take {take}",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                picked.extend_from_slice(&members[..take]);
            }
            picked
        }
    };
    train_idx.shuffle(&mut rng);
    let mut in_train = vec![false; m];
    for &i in &train_idx {
        in_train[i] = true;
    }
    let test_idx: Vec<usize> = (0..m).filter(|&i| !in_train[i]).collect();
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(ElmError::InvalidParameter(format!(
            "split leaves {} training and {} test samples",
            train_idx.len(),
            test_idx.len()
        )));
    }
    Ok(Split {
        train: data.subset(&train_idx)?,
        test: data.subset(&test_idx)?,
        train_idx,
        test_idx,
    })
}

/// Mean of class `k`: the `k`-th vertex of the unit simplex in `dim` dimensions.
pub fn blob_means(classes: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|k| (0..dim).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Isotropic Gaussian clusters, `per_class` samples each, laid out class by class.
pub fn synth_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<(FeatureGroup, Vec<usize>)> {
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(ElmError::InvalidParameter("classes, per_class and dim must be >= 1".into()));
    }
    if classes > dim {
        return Err(ElmError::InvalidParameter(format!(
            "{classes} classes need at least {classes} dimensions, got {dim}"
        )));
    }
    let noise = Normal::new(0.0, spread)
        .ok()
        .filter(|_| spread > 0.0)
        .ok_or_else(|| ElmError::InvalidParameter(format!("spread must be positive, got {spread}")))?;
    let means = blob_means(classes, dim);
    let mut rng = seed::rng(seed);
    let m = classes * per_class;
    let mut data = Vec::with_capacity(m * dim);
    let mut labels = Vec::with_capacity(m);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(mean.iter().map(|&mu| mu + noise.sample(&mut rng)));
            labels.push(k);
        }
    }
    let x = Matrix::new(m, dim, data)?.transpose();
    Ok((FeatureGroup::new("blobs", x), labels))
}
