//! Second layer: merge subspace features into one combined feature matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::extractor::SubspaceFeature;
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CombineOperator {
    /// Weighted elementwise sum; every operand must share one shape.
    Plus,
    /// Row-wise stacking in list order.
    Concat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombineSpec {
    pub operator: CombineOperator,
    pub gamma: f64,
}

impl Default for CombineSpec {
    fn default() -> Self {
        CombineSpec {
            operator: CombineOperator::Plus,
            gamma: 1.0,
        }
    }
}

fn check_common(features: &[SubspaceFeature], spec: &CombineSpec) -> Result<()> {
    let first = features
        .first()
        .ok_or_else(|| ElmError::InvalidInput("no features to combine".into()))?;
    if !spec.gamma.is_finite() {
        return Err(ElmError::InvalidParameter(format!("gamma must be finite, got {}", spec.gamma)));
    }
    let m = first.h.cols();
    if features.iter().any(|f| f.h.cols() != m) {
        return Err(ElmError::shape("combine", "features disagree on sample count"));
    }
    if spec.operator == CombineOperator::Plus {
        let shape = first.h.shape();
        if let Some(f) = features.iter().find(|f| f.h.shape() != shape) {
            return Err(ElmError::shape(
                "combine",
                format!("plus needs equal shapes, got {:?} and {:?}", shape, f.h.shape()),
            ));
        }
    }
    Ok(())
}

/// Left fold of the binary combination operator over `features`.
///
/// `plus` yields `F₁ + γ·F₂ + γ·F₃ + …`; `concat` stacks rows and ignores γ.
pub fn combine(features: &[SubspaceFeature], spec: &CombineSpec) -> Result<Matrix> {
    check_common(features, spec)?;
    match spec.operator {
        CombineOperator::Plus => {
            let mut acc = features[0].h.as_dmatrix().clone();
            for f in &features[1..] {
                acc += &*f.h * spec.gamma;
            }
            Ok(Matrix::wrap(acc))
        }
        CombineOperator::Concat => {
            let rows = features.iter().map(|f| f.h.rows()).sum();
            let cols = features[0].h.cols();
            let mut out = DMatrix::zeros(rows, cols);
            let mut at = 0;
            for f in features {
                out.rows_mut(at, f.h.rows()).copy_from(&*f.h);
                at += f.h.rows();
            }
            Ok(Matrix::wrap(out))
        }
    }
}

/// Row count of [`combine`]'s output.
pub fn combined_dim(features: &[SubspaceFeature], spec: &CombineSpec) -> Result<usize> {
    check_common(features, spec)?;
    Ok(match spec.operator {
        CombineOperator::Plus => features[0].h.rows(),
        CombineOperator::Concat => features.iter().map(|f| f.h.rows()).sum(),
    })
}
