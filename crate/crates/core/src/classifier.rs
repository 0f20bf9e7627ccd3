//! Third layer: greedy additive classifier built from sigmoid subnetwork nodes.
//!
//! Each node pulls the current residual back through the sigmoid (after
//! normalizing it into `(0, 1]`), ridge-solves a linear map from the combined
//! features onto that pre-activation, pushes the fitted pre-activation through
//! the sigmoid and the inverse normalization, and finally scales the result by
//! the 1-D least-squares step that best deflates the residual.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::linalg::{self, Matrix, NormParams, DEFAULT_LOGIT_CLIP, DEFAULT_NORM_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierNode {
    /// `t × D` input weights.
    pub a_p: Matrix,
    pub b_p: f64,
    /// Step size applied to the node's output.
    pub beta_p: f64,
    /// Normalization of the residual the node was fitted to.
    pub norm_e: NormParams,
    /// Map inverted on the node's activation.
    pub norm_out: NormParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// In fit order.
    pub nodes: Vec<ClassifierNode>,
    pub c: f64,
    pub feature_dim: usize,
    pub classes: usize,
}

/// Output of [`fit_traced`]: the model plus the residual history.
#[derive(Clone, Debug)]
pub struct FitTrace {
    pub model: ClassifierModel,
    /// `‖e_c‖_F` for `c = 0..=nodes`, starting with `‖T‖_F`.
    pub residual_norms: Vec<f64>,
    pub final_residual: Matrix,
}

impl ClassifierNode {
    /// `u⁻¹(sigmoid(a_p · H + b_p))`, the node's contribution before scaling.
    pub fn activation(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.a_p.cols() {
            return Err(ElmError::shape(
                "activation",
                format!("node expects {} feature rows, got {}", self.a_p.cols(), h.rows()),
            ));
        }
        Ok(Matrix::wrap(self.activation_raw(h)))
    }

    fn activation_raw(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let b = self.b_p;
        let g = (&*self.a_p * h).map(|v| linalg::sigmoid(v + b));
        linalg::denormalize_raw(&g, &self.norm_out)
    }
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(ElmError::InvalidParameter(format!(
            "coefficient C must be positive, got {c}"
        )))
    }
}

/// `Hᵀ (I/C + H Hᵀ)⁻¹`, the same for every node of one fit.
fn ridge_projector(h: &Matrix, c: f64) -> Result<DMatrix<f64>> {
    let gram = Matrix::wrap(&**h * h.transpose().as_dmatrix());
    let inv = linalg::ridge_inverse(&gram, c)?;
    Ok(h.transpose().into_dmatrix() * inv.into_dmatrix())
}

fn fit_node_with(
    projector: &DMatrix<f64>,
    h: &Matrix,
    e_prev: &Matrix,
    eps: f64,
) -> Result<(ClassifierNode, Matrix)> {
    let (normalized, norm_e) = linalg::normalize_unit(e_prev, eps)?;
    let z = linalg::logit_map(&normalized, DEFAULT_LOGIT_CLIP)?.into_dmatrix();

    let a_p = &z * projector;
    let b_p = (&z - &a_p * &**h).mean();

    let mut node = ClassifierNode {
        a_p: Matrix::from_dmatrix(a_p)?,
        b_p,
        beta_p: 0.0,
        norm_e,
        norm_out: norm_e,
    };
    let v = node.activation_raw(h);
    let v_sq = v.norm_squared();
    if v_sq == 0.0 {
        if e_prev.norm_squared() == 0.0 {
            // zero residual is a fixed point
            return Ok((node, e_prev.clone()));
        }
        return Err(ElmError::DegenerateNode);
    }
    node.beta_p = e_prev.dot(&v) / v_sq;
    let e_next = &**e_prev - v * node.beta_p;
    Ok((node, Matrix::wrap(e_next)))
}

fn check_fit_shapes(op: &'static str, h: &Matrix, e: &Matrix) -> Result<()> {
    if h.cols() != e.cols() {
        return Err(ElmError::shape(
            op,
            format!("H has {} samples, residual has {}", h.cols(), e.cols()),
        ));
    }
    Ok(())
}

/// Fits one node against the residual `e_prev` and returns it together with
/// the deflated residual `e_prev − β_p·V`.
pub fn fit_node(h: &Matrix, e_prev: &Matrix, c: f64, eps: f64) -> Result<(ClassifierNode, Matrix)> {
    check_fit_shapes("fit_node", h, e_prev)?;
    check_c(c)?;
    let projector = ridge_projector(h, c)?;
    fit_node_with(&projector, h, e_prev, eps)
}

/// Greedy fit of up to `nodes` nodes, threading the residual from `e₀ = T`.
///
/// A degenerate node ends the fit early: the layer has no randomness, so
/// retrying from the same residual would produce the same node again.
pub fn fit_traced(h: &Matrix, t: &Matrix, nodes: usize, c: f64) -> Result<FitTrace> {
    check_fit_shapes("fit", h, t)?;
    check_c(c)?;
    if nodes == 0 {
        return Err(ElmError::InvalidParameter("classifier needs at least one node".into()));
    }
    let projector = ridge_projector(h, c)?;
    let mut e = t.clone();
    let mut fitted = Vec::with_capacity(nodes);
    let mut residual_norms = vec![e.norm()];
    while fitted.len() < nodes {
        match fit_node_with(&projector, h, &e, DEFAULT_NORM_EPS) {
            Ok((node, e_next)) => {
                fitted.push(node);
                e = e_next;
                residual_norms.push(e.norm());
            }
            Err(ElmError::DegenerateNode) => break,
            Err(other) => return Err(other),
        }
    }
    Ok(FitTrace {
        model: ClassifierModel {
            nodes: fitted,
            c,
            feature_dim: h.rows(),
            classes: t.rows(),
        },
        residual_norms,
        final_residual: e,
    })
}

pub fn fit(h: &Matrix, t: &Matrix, nodes: usize, c: f64) -> Result<ClassifierModel> {
    fit_traced(h, t, nodes, c).map(|trace| trace.model)
}

/// `Σ_c β_p^c · V_c(H)`, shape `t × M`.
pub fn score(m: &ClassifierModel, h: &Matrix) -> Result<Matrix> {
    if h.rows() != m.feature_dim {
        return Err(ElmError::shape(
            "score",
            format!("model expects {} feature rows, got {}", m.feature_dim, h.rows()),
        ));
    }
    let mut s = DMatrix::zeros(m.classes, h.cols());
    for node in &m.nodes {
        s += node.activation_raw(h) * node.beta_p;
    }
    Ok(Matrix::wrap(s))
}

/// Per-column argmax; ties go to the lowest class index.
pub fn decode_labels(s: &Matrix) -> Vec<usize> {
    s.column_iter()
        .map(|col| {
            let mut best = 0;
            for (k, &v) in col.iter().enumerate().skip(1) {
                if v > col[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
