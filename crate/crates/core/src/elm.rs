//! Baseline single-hidden-layer extreme learning machine: a random sigmoid
//! hidden layer followed by a closed-form linear readout.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::linalg::{self, sigmoid, Matrix};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
}

/// Untrained hidden layer: `weights` is `L × n`, `bias` has `L` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomHiddenLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Readout weights, `L × t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputWeights {
    pub beta: Matrix,
}

impl RandomHiddenLayer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn hidden_count(&self) -> usize {
        self.weights.rows()
    }
}

/// Samples weights and biases i.i.d. uniform on `[-1, 1]`.
pub fn init_hidden(input_dim: usize, hidden: usize, seed: u64) -> Result<RandomHiddenLayer> {
    if input_dim == 0 || hidden == 0 {
        return Err(ElmError::InvalidParameter(format!(
            "hidden layer needs positive dimensions, got n={input_dim}, L={hidden}"
        )));
    }
    let mut rng = seed::rng(seed);
    let weights = Matrix::from_fn(hidden, input_dim, |_, _| rng.random_range(-1.0..=1.0))?;
    let bias = (0..hidden).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(RandomHiddenLayer {
        weights,
        bias,
        activation: Activation::Sigmoid,
    })
}

/// `H[j, i] = sigmoid(w_j · x_i + b_j)`, shape `L × M`.
pub fn hidden_activations(layer: &RandomHiddenLayer, x: &Matrix) -> Result<Matrix> {
    if x.rows() != layer.input_dim() {
        return Err(ElmError::shape(
            "hidden_activations",
            format!("layer expects {} input rows, got {}", layer.input_dim(), x.rows()),
        ));
    }
    let mut h = &*layer.weights * &**x;
    for (mut row, &b) in h.row_iter_mut().zip(&layer.bias) {
        row.apply(|v| *v = sigmoid(*v + b));
    }
    Ok(Matrix::wrap(h))
}

fn check_cols(op: &'static str, h: &Matrix, t: &Matrix) -> Result<()> {
    if h.cols() != t.cols() {
        return Err(ElmError::shape(
            op,
            format!("H has {} samples, T has {}", h.cols(), t.cols()),
        ));
    }
    Ok(())
}

/// Minimum-norm least-squares readout `β = (Hᵀ)† Tᵀ`.
pub fn fit_output(h: &Matrix, t: &Matrix) -> Result<OutputWeights> {
    check_cols("fit_output", h, t)?;
    let ht = h.transpose();
    let beta = linalg::pinv_default(&ht)?;
    Ok(OutputWeights {
        beta: Matrix::wrap(&*beta * t.transpose().as_dmatrix()),
    })
}

/// Ridge-regularized readout `β = (I/c + H Hᵀ)⁻¹ H Tᵀ`.
pub fn fit_output_ridge(h: &Matrix, t: &Matrix, c: f64) -> Result<OutputWeights> {
    check_cols("fit_output_ridge", h, t)?;
    let gram = Matrix::wrap(&**h * h.transpose().as_dmatrix());
    let inv = linalg::ridge_inverse(&gram, c)?;
    let rhs: DMatrix<f64> = &**h * t.transpose().as_dmatrix();
    Ok(OutputWeights {
        beta: Matrix::wrap(&*inv * rhs),
    })
}

/// Scores `βᵀ H` for an already computed hidden map.
pub fn readout(w: &OutputWeights, h: &Matrix) -> Result<Matrix> {
    if w.beta.rows() != h.rows() {
        return Err(ElmError::shape(
            "readout",
            format!("beta has {} rows, H has {}", w.beta.rows(), h.rows()),
        ));
    }
    Ok(Matrix::wrap(w.beta.transpose().as_dmatrix() * &**h))
}

/// `βᵀ · hidden_activations(layer, X)`, shape `t × M`.
pub fn predict(layer: &RandomHiddenLayer, w: &OutputWeights, x: &Matrix) -> Result<Matrix> {
    if w.beta.rows() != layer.hidden_count() {
        return Err(ElmError::shape(
            "predict",
            format!(
                "beta has {} rows but layer has {} neurons",
                w.beta.rows(),
                layer.hidden_count()
            ),
        ));
    }
    readout(w, &hidden_activations(layer, x)?)
}
