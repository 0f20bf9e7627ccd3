//! End-to-end hierarchical model: per-group subnetwork extraction, feature
//! combination, and either the batch subnetwork classifier or a sequential
//! (chunk-by-chunk) ridge readout over the combined features.
//!
//! In sequential mode the extractors are trained on the initial chunk only and
//! stay frozen afterwards, so the readout always sees one fixed feature map.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, ClassifierModel};
use crate::combine::{self, CombineOperator, CombineSpec};
use crate::error::{ElmError, Result};
use crate::extractor::{self, ExtractorConfig, SubnetNode, SubspaceFeature};
use crate::linalg::{Matrix, DEFAULT_NORM_EPS};
use crate::metrics::Evaluation;
use crate::oselm::{self, OselmState};
use crate::seed;

pub const MODEL_FORMAT: &str = "hoselm-model";
pub const MODEL_VERSION: u32 = 1;

const CHUNK_STREAM: u64 = 0xC4_0C5;

/// One block of features over the shared sample axis (`n_g × M`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGroup {
    pub name: String,
    pub x: Matrix,
}

impl FeatureGroup {
    pub fn new(name: impl Into<String>, x: Matrix) -> Self {
        FeatureGroup { name: name.into(), x }
    }

    pub fn samples(&self) -> usize {
        self.x.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Whole training set at once, subnetwork classifier readout.
    Batch,
    /// Initial chunk then chunk-by-chunk updates of a ridge readout.
    Sequential,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Batch => "batch",
            Mode::Sequential => "sequential",
        })
    }
}

/// Chunk lengths used when `fit` streams a training set in sequential mode.
///
/// Written `60` for a fixed length or `variable:20-80` for lengths drawn
/// uniformly (inclusive) from the configuration seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkSize {
    Fixed(usize),
    Variable { min: usize, max: usize },
}

impl ChunkSize {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChunkSize::Fixed(0) => Err(ElmError::InvalidParameter("chunk size must be >= 1".into())),
            ChunkSize::Variable { min, max } if min == 0 || max < min => Err(
                ElmError::InvalidParameter(format!("invalid variable chunk range {min}-{max}")),
            ),
            _ => Ok(()),
        }
    }

    /// Splits `total` samples into consecutive chunk lengths.
    pub fn plan(&self, total: usize, seed: u64) -> Vec<usize> {
        let mut rng = seed::rng(seed::derive(seed, CHUNK_STREAM));
        let mut out = Vec::new();
        let mut left = total;
        while left > 0 {
            let want = match *self {
                ChunkSize::Fixed(n) => n,
                ChunkSize::Variable { min, max } => rng.random_range(min..=max),
            };
            let take = want.min(left);
            out.push(take);
            left -= take;
        }
        out
    }
}

impl fmt::Display for ChunkSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkSize::Fixed(n) => write!(f, "{n}"),
            ChunkSize::Variable { min, max } => write!(f, "variable:{min}-{max}"),
        }
    }
}

impl FromStr for ChunkSize {
    type Err = ElmError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ElmError::InvalidParameter(format!("cannot parse chunk size '{s}'"));
        let cs = if let Some(range) = s.strip_prefix("variable:") {
            let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
            ChunkSize::Variable {
                min: lo.trim().parse().map_err(|_| bad())?,
                max: hi.trim().parse().map_err(|_| bad())?,
            }
        } else {
            ChunkSize::Fixed(s.trim().parse().map_err(|_| bad())?)
        };
        cs.validate()?;
        Ok(cs)
    }
}

impl Serialize for ChunkSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ChunkSize::Fixed(n) => s.serialize_u64(*n as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for ChunkSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(usize),
            Text(String),
        }
        let cs = match Repr::deserialize(d)? {
            Repr::Num(n) => ChunkSize::Fixed(n),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom)?,
        };
        cs.validate().map_err(serde::de::Error::custom)?;
        Ok(cs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Subnetwork nodes per feature group.
    pub nodes: usize,
    /// Neurons per subnetwork node.
    pub hidden: usize,
    /// Feedback damping of the node refinement.
    pub lambda: f64,
    pub gamma: f64,
    pub operator: CombineOperator,
    /// Ridge coefficient of the readout.
    pub coeff: f64,
    pub classifier_nodes: usize,
    pub mode: Mode,
    pub chunk_size: ChunkSize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            nodes: 3,
            hidden: 100,
            lambda: 0.5,
            gamma: 1.0,
            operator: CombineOperator::Plus,
            coeff: 100.0,
            classifier_nodes: 10,
            mode: Mode::Batch,
            chunk_size: ChunkSize::Fixed(60),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.hidden == 0 || self.classifier_nodes == 0 {
            return Err(ElmError::InvalidParameter(
                "nodes, hidden and classifier_nodes must all be >= 1".into(),
            ));
        }
        if !self.coeff.is_finite() || self.coeff <= 0.0 {
            return Err(ElmError::InvalidParameter(format!(
                "coeff must be positive, got {}",
                self.coeff
            )));
        }
        if !self.gamma.is_finite() {
            return Err(ElmError::InvalidParameter("gamma must be finite".into()));
        }
        self.chunk_size.validate()?;
        self.extractor_config(0).validate()
    }

    pub fn combine_spec(&self) -> CombineSpec {
        CombineSpec {
            operator: self.operator,
            gamma: self.gamma,
        }
    }

    /// Extractor settings of feature group `group`.
    pub fn extractor_config(&self, group: usize) -> ExtractorConfig {
        ExtractorConfig {
            nodes: self.nodes,
            neurons: self.hidden,
            lambda: self.lambda,
            eps_norm: DEFAULT_NORM_EPS,
            seed: seed::derive(self.seed, group as u64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Readout {
    Classifier(ClassifierModel),
    Sequential(OselmState),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HOselmModel {
    /// Refined subnetwork nodes, one list per feature group.
    pub extractors: Vec<Vec<SubnetNode>>,
    pub group_names: Vec<String>,
    pub combine: CombineSpec,
    pub readout: Readout,
    pub classes: usize,
    pub config: PipelineConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: HOselmModel,
}

fn check_groups(groups: &[FeatureGroup], samples: usize) -> Result<()> {
    if groups.is_empty() {
        return Err(ElmError::InvalidInput("at least one feature group is required".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.samples() != samples) {
        return Err(ElmError::shape(
            "groups",
            format!("group '{}' has {} samples, expected {samples}", g.name, g.samples()),
        ));
    }
    Ok(())
}

fn labels_cover_all(t: &Matrix) -> Option<usize> {
    let mut seen = vec![false; t.rows()];
    for l in classifier::decode_labels(t) {
        seen[l] = true;
    }
    seen.iter().position(|s| !s)
}

/// Trains extractors for every group and returns them with the combined features.
fn train_extractors(
    xs: &[&Matrix],
    t: &Matrix,
    cfg: &PipelineConfig,
) -> Result<(Vec<Vec<SubnetNode>>, Matrix)> {
    let mut extractors = Vec::with_capacity(xs.len());
    let mut features: Vec<SubspaceFeature> = Vec::with_capacity(xs.len() * cfg.nodes);
    for (g, x) in xs.iter().enumerate() {
        let (nodes, feats) = extractor::extract_features(x, t, &cfg.extractor_config(g))?;
        extractors.push(nodes);
        features.extend(feats);
    }
    let h = combine::combine(&features, &cfg.combine_spec())?;
    Ok((extractors, h))
}

/// Fits the full model. In sequential mode the training columns are streamed
/// in their given order according to `cfg.chunk_size`.
pub fn fit(groups: &[FeatureGroup], t: &Matrix, cfg: &PipelineConfig) -> Result<HOselmModel> {
    cfg.validate()?;
    check_groups(groups, t.cols())?;
    let group_names = groups.iter().map(|g| g.name.clone()).collect();
    let combine = cfg.combine_spec();

    match cfg.mode {
        Mode::Batch => {
            let xs: Vec<&Matrix> = groups.iter().map(|g| &g.x).collect();
            let (extractors, h) = train_extractors(&xs, t, cfg)?;
            let readout = classifier::fit(&h, t, cfg.classifier_nodes, cfg.coeff)?;
            Ok(HOselmModel {
                extractors,
                group_names,
                combine,
                readout: Readout::Classifier(readout),
                classes: t.rows(),
                config: cfg.clone(),
            })
        }
        Mode::Sequential => {
            let plan = cfg.chunk_size.plan(t.cols(), cfg.seed);
            let first = plan[0];
            let x0: Vec<Matrix> = groups
                .iter()
                .map(|g| g.x.column_range(0, first))
                .collect::<Result<_>>()?;
            let t0 = t.column_range(0, first)?;
            if let Some(missing) = labels_cover_all(&t0) {
                return Err(ElmError::InvalidInput(format!(
                    "initial chunk of {first} samples has no sample of class {missing}; \
                     every class must appear in the first chunk"
                )));
            }
            let refs: Vec<&Matrix> = x0.iter().collect();
            let (extractors, h0) = train_extractors(&refs, &t0, cfg)?;
            let state = oselm::os_boot(&h0, &t0, cfg.coeff)?;
            let mut model = HOselmModel {
                extractors,
                group_names,
                combine,
                readout: Readout::Sequential(state),
                classes: t.rows(),
                config: cfg.clone(),
            };
            let mut at = first;
            for &len in &plan[1..] {
                let xs: Vec<Matrix> = groups
                    .iter()
                    .map(|g| g.x.column_range(at, len))
                    .collect::<Result<_>>()?;
                model.partial_fit(&xs, &t.column_range(at, len)?)?;
                at += len;
            }
            Ok(model)
        }
    }
}

impl HOselmModel {
    pub fn group_count(&self) -> usize {
        self.extractors.len()
    }

    /// Combined features of a sample block given as one matrix per group.
    pub fn transform(&self, xs: &[&Matrix]) -> Result<Matrix> {
        if xs.len() != self.group_count() {
            return Err(ElmError::shape(
                "transform",
                format!("model has {} groups, got {}", self.group_count(), xs.len()),
            ));
        }
        let m = xs[0].cols();
        let mut features = Vec::new();
        for (nodes, x) in self.extractors.iter().zip(xs) {
            if x.cols() != m {
                return Err(ElmError::shape("transform", "groups disagree on sample count"));
            }
            for node in nodes {
                features.push(extractor::project(node, x)?);
            }
        }
        combine::combine(&features, &self.combine)
    }

    pub fn combined_dim(&self) -> usize {
        match &self.readout {
            Readout::Classifier(c) => c.feature_dim,
            Readout::Sequential(s) => s.hidden_dim(),
        }
    }

    /// Learns one more chunk with the extractors frozen. The chunk is only
    /// borrowed; nothing of it is kept beyond the updated readout.
    pub fn partial_fit(&mut self, xs: &[Matrix], t: &Matrix) -> Result<()> {
        let Readout::Sequential(state) = &self.readout else {
            return Err(ElmError::Mode("partial_fit requires a sequential-mode model".into()));
        };
        if t.rows() != self.classes {
            return Err(ElmError::shape(
                "partial_fit",
                format!("model has {} classes, chunk targets {}", self.classes, t.rows()),
            ));
        }
        let refs: Vec<&Matrix> = xs.iter().collect();
        let h = self.transform(&refs)?;
        let next = oselm::os_update(state.clone(), h, t.clone())?;
        self.readout = Readout::Sequential(next);
        Ok(())
    }

    /// Raw class scores, `t × M`.
    pub fn scores(&self, groups: &[FeatureGroup]) -> Result<Matrix> {
        let xs: Vec<&Matrix> = groups.iter().map(|g| &g.x).collect();
        let h = self.transform(&xs)?;
        match &self.readout {
            Readout::Classifier(c) => classifier::score(c, &h),
            Readout::Sequential(s) => oselm::os_predict(s, &h),
        }
    }

    pub fn predict(&self, groups: &[FeatureGroup]) -> Result<Vec<usize>> {
        Ok(classifier::decode_labels(&self.scores(groups)?))
    }

    /// Confusion counts and recognition rates against one-hot targets `t`.
    /// `infer_seconds` is measured here; `train_seconds` is left to the caller.
    pub fn evaluate(&self, groups: &[FeatureGroup], t: &Matrix) -> Result<Evaluation> {
        check_groups(groups, t.cols())?;
        let start = Instant::now();
        let predicted = self.predict(groups)?;
        let elapsed = start.elapsed().as_secs_f64();
        let truth = classifier::decode_labels(t);
        let mut ev = Evaluation::from_labels(&truth, &predicted, self.classes)?;
        ev.infer_seconds = Some(elapsed);
        Ok(ev)
    }

    fn check_consistency(&self) -> Result<()> {
        if self.extractors.len() != self.group_names.len() || self.extractors.is_empty() {
            return Err(ElmError::Format("extractor and group counts differ".into()));
        }
        let per_group = self.extractors.iter().map(Vec::len);
        let nodes: usize = per_group.clone().sum();
        let neurons = self.extractors[0].first().map(|n| n.neurons());
        let expected = match (self.combine.operator, neurons) {
            (_, None) => return Err(ElmError::Format("empty extractor".into())),
            (CombineOperator::Plus, Some(d)) => d,
            (CombineOperator::Concat, Some(_)) => {
                self.extractors.iter().flatten().map(|n| n.neurons()).sum()
            }
        };
        if nodes == 0 || expected != self.combined_dim() {
            return Err(ElmError::Format(format!(
                "readout expects {} features but extractors produce {expected}",
                self.combined_dim()
            )));
        }
        let out = match &self.readout {
            Readout::Classifier(c) => c.classes,
            Readout::Sequential(s) => s.output_dim(),
        };
        if out != self.classes {
            return Err(ElmError::Format("readout class count mismatch".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format != MODEL_FORMAT {
            return Err(ElmError::Format(format!("unknown model format '{}'", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(ElmError::Format(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        file.model.check_consistency()?;
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        HOselmModel::from_json(&std::fs::read_to_string(path)?)
    }
}
