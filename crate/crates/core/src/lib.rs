//! Hierarchical online-sequential extreme learning machine.
//!
//! Three layers, all trained in closed form:
//!
//! 1. [`extractor`]: per feature group, `L` random subnetwork nodes, each
//!    refined once by error feedback, emit linear subspace features.
//! 2. [`combine`]: the subspace features are merged (weighted sum or stacking).
//! 3. [`classifier`]: a greedy stack of sigmoid subnetwork nodes fits the
//!    targets, or, in sequential mode, [`oselm`] maintains a ridge readout
//!    chunk by chunk.
//!
//! [`pipeline`] wires the layers together; [`bench`] drives experiments.
//! Matrices store samples as columns throughout.

pub mod bench;
pub mod classifier;
pub mod combine;
pub mod elm;
pub mod error;
pub mod extractor;
pub mod linalg;
pub mod metrics;
pub mod oselm;
pub mod pipeline;
pub mod seed;

pub use error::{ElmError, Result};
pub use linalg::{Matrix, NormParams};
pub use pipeline::{ChunkSize, FeatureGroup, HOselmModel, Mode, PipelineConfig};
