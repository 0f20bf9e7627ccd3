//! Dense matrix carrier and the scalar nonlinearities the network layers share.
//!
//! Every matrix in the crate stores samples as columns: a data block with `n`
//! features and `M` samples is `n × M`, and hidden activations are `L × M`.

use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};

/// Clip applied to logit inputs so both log singularities stay out of reach.
pub const DEFAULT_LOGIT_CLIP: f64 = 1e-7;
/// Lower end of the `(0, 1]` normalization range.
pub const DEFAULT_NORM_EPS: f64 = 1e-4;

/// Dense real matrix with at least one row and one column and finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix(DMatrix<f64>);

/// On-disk layout: shape plus row-major payload.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = ElmError;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::new(r.rows, r.cols, r.data)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr {
            rows: m.rows(),
            cols: m.cols(),
            data: m.to_row_major(),
        }
    }
}

impl Matrix {
    /// Builds a matrix from row-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(ElmError::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(ElmError::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Matrix::from_dmatrix(DMatrix::from_row_slice(rows, cols, &data))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != n_cols) {
            return Err(ElmError::InvalidInput("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Matrix::new(n_rows, n_cols, data)
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(ElmError::InvalidInput(format!(
                "matrix dimensions must be positive, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % m.nrows(), pos / m.nrows());
            return Err(ElmError::InvalidInput(format!(
                "non-finite entry at ({r}, {c})"
            )));
        }
        Ok(Matrix(m))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Matrix::from_dmatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Matrix::from_dmatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Matrix::from_dmatrix(DMatrix::identity(n, n))
    }

    /// Wraps an internally computed result. Shape and finiteness are the
    /// caller's responsibility.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() > 0 && m.ncols() > 0);
        Matrix(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[(r, c)]
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Gathers the listed sample columns, in the listed order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Matrix> {
        if idx.is_empty() {
            return Err(ElmError::InvalidInput("empty column selection".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.cols()) {
            return Err(ElmError::shape(
                "select_columns",
                format!("column {bad} out of range for {} columns", self.cols()),
            ));
        }
        Ok(Matrix(self.0.select_columns(idx.iter())))
    }

    /// Contiguous range of sample columns.
    pub fn column_range(&self, start: usize, len: usize) -> Result<Matrix> {
        if len == 0 || start + len > self.cols() {
            return Err(ElmError::shape(
                "column_range",
                format!("range {start}..{} invalid for {} columns", start + len, self.cols()),
            ));
        }
        Ok(Matrix(self.0.columns(start, len).into_owned()))
    }

    /// Concatenates sample blocks left to right.
    pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let first = blocks
            .first()
            .ok_or_else(|| ElmError::InvalidInput("no blocks to stack".into()))?;
        let rows = first.rows();
        if blocks.iter().any(|b| b.rows() != rows) {
            return Err(ElmError::shape("hstack", "row counts differ"));
        }
        let cols: usize = blocks.iter().map(|b| b.cols()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut at = 0;
        for b in blocks {
            out.columns_mut(at, b.cols()).copy_from(&b.0);
            at += b.cols();
        }
        Ok(Matrix(out))
    }
}

impl Deref for Matrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Parameters of the affine map into `[eps, 1]` recorded by [`normalize_unit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub lo: f64,
    pub hi: f64,
    pub eps: f64,
}

impl NormParams {
    /// True when the source matrix was constant and the map collapsed.
    pub fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }
}

/// Relative singular-value cutoff used when the caller has no preference.
pub fn default_rcond(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols) as f64
}

/// Moore-Penrose pseudoinverse via SVD. Singular values at or below
/// `rcond * σ_max` are treated as zero.
pub fn pinv(a: &Matrix, rcond: f64) -> Result<Matrix> {
    if !rcond.is_finite() || rcond < 0.0 {
        return Err(ElmError::InvalidParameter(format!("rcond must be >= 0, got {rcond}")));
    }
    if !a.all_finite() {
        return Err(ElmError::InvalidInput("pinv of non-finite matrix".into()));
    }
    Ok(Matrix(pinv_raw(&a.0, rcond)?))
}

/// [`pinv`] with [`default_rcond`].
pub fn pinv_default(a: &Matrix) -> Result<Matrix> {
    pinv(a, default_rcond(a.rows(), a.cols()))
}

pub(crate) fn pinv_raw(a: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    let fa = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = fa.thin_svd().map_err(|_| ElmError::NoConvergence)?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let s_max = s.iter().copied().fold(0.0_f64, f64::max);
    let cutoff = rcond * s_max;

    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &sigma) in s.iter().enumerate() {
        if sigma > cutoff && sigma > 0.0 {
            // out += v_k * u_kᵀ / σ_k
            for j in 0..a.nrows() {
                let w = u[(j, k)] / sigma;
                for i in 0..a.ncols() {
                    out[(i, j)] += v[(i, k)] * w;
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn pinv_auto(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    pinv_raw(a, default_rcond(a.nrows(), a.ncols()))
}

/// Inverse of a symmetric positive definite matrix, falling back to LU when
/// the Cholesky factorization fails.
pub(crate) fn spd_inverse(m: DMatrix<f64>, op: &'static str) -> Result<DMatrix<f64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.inverse());
    }
    m.try_inverse().ok_or(ElmError::Singular(op))
}

/// Returns `(I/c + G)⁻¹` for square symmetric `G`.
pub fn ridge_inverse(g: &Matrix, c: f64) -> Result<Matrix> {
    if !g.is_square() {
        return Err(ElmError::shape(
            "ridge_inverse",
            format!("expected square matrix, got {}x{}", g.rows(), g.cols()),
        ));
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(ElmError::InvalidParameter(format!(
            "ridge coefficient must be positive, got {c}"
        )));
    }
    let mut m = g.0.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0 / c;
    }
    spd_inverse(m, "ridge_inverse").map(Matrix)
}

/// Mean of squared entries.
pub fn mse(r: &Matrix) -> Result<f64> {
    Ok(mse_raw(&r.0))
}

pub(crate) fn mse_raw(r: &DMatrix<f64>) -> f64 {
    r.norm_squared() / r.len() as f64
}

/// Logistic function, evaluated without overflow and kept strictly inside (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `-ln(1/x - 1)` after clipping `x` into `[clip_eps, 1 - clip_eps]`.
pub fn logit(x: f64, clip_eps: f64) -> f64 {
    let x = x.clamp(clip_eps, 1.0 - clip_eps);
    -(1.0 / x - 1.0).ln()
}

pub fn sigmoid_map(x: &Matrix) -> Matrix {
    Matrix(x.0.map(sigmoid))
}

pub fn logit_map(x: &Matrix, clip_eps: f64) -> Result<Matrix> {
    check_unit_eps("clip_eps", clip_eps)?;
    Ok(Matrix(x.0.map(|v| logit(v, clip_eps))))
}

fn check_unit_eps(name: &str, eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(ElmError::InvalidParameter(format!(
            "{name} must lie in (0, 0.5), got {eps}"
        )))
    }
}

/// Affine map of the whole matrix onto `[eps, 1]` using its global min and max.
/// A constant matrix maps to all ones.
pub fn normalize_unit(x: &Matrix, eps: f64) -> Result<(Matrix, NormParams)> {
    check_unit_eps("eps", eps)?;
    let lo = x.0.min();
    let hi = x.0.max();
    let params = NormParams { lo, hi, eps };
    if params.is_degenerate() {
        return Ok((Matrix(DMatrix::from_element(x.rows(), x.cols(), 1.0)), params));
    }
    let scale = (1.0 - eps) / (hi - lo);
    // the top of the range may round past 1
    Ok((Matrix(x.0.map(|v| (eps + scale * (v - lo)).min(1.0))), params))
}

/// Inverse of [`normalize_unit`]. Degenerate parameters send everything to `lo`.
pub fn denormalize_unit(y: &Matrix, p: &NormParams) -> Matrix {
    Matrix(denormalize_raw(&y.0, p))
}

pub(crate) fn denormalize_raw(y: &DMatrix<f64>, p: &NormParams) -> DMatrix<f64> {
    if p.is_degenerate() {
        return DMatrix::from_element(y.nrows(), y.ncols(), p.lo);
    }
    let span = p.hi - p.lo;
    y.map(|v| p.lo + (v - p.eps) / (1.0 - p.eps) * span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::INFINITY]).is_err());
        let a = Matrix::new(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.to_row_major(), vec![1., 2., 3., 4., 5., 6.]);
    }

    #[test]
    fn pinv_identity_and_diagonal() {
        let i3 = Matrix::identity(3).unwrap();
        let p = pinv_default(&i3).unwrap();
        assert!((&*p - &*i3).norm() < 1e-15);

        let d = m(&[&[2.0, 0.0], &[0.0, 0.0]]);
        let p = pinv_default(&d).unwrap();
        let want = m(&[&[0.5, 0.0], &[0.0, 0.0]]);
        assert!((&*p - &*want).norm() < 1e-15);
    }

    #[test]
    fn pinv_shape_and_rcond() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let p = pinv_default(&a).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert!(pinv(&a, -1.0).is_err());
        // a cutoff above every singular value zeroes the result
        let p = pinv(&a, 2.0).unwrap();
        assert_eq!(p.norm(), 0.0);
    }

    #[test]
    fn ridge_inverse_cases() {
        let z = Matrix::zeros(2, 2).unwrap();
        let r = ridge_inverse(&z, 1.0).unwrap();
        assert!((&*r - DMatrix::identity(2, 2)).norm() < 1e-15);

        let i = Matrix::identity(2).unwrap();
        let r = ridge_inverse(&i, 1.0).unwrap();
        assert!((&*r - DMatrix::identity(2, 2) * 0.5).norm() < 1e-15);

        let rect = Matrix::zeros(2, 3).unwrap();
        assert!(matches!(ridge_inverse(&rect, 1.0), Err(ElmError::Shape { .. })));
        assert!(matches!(ridge_inverse(&i, 0.0), Err(ElmError::InvalidParameter(_))));
        assert!(matches!(ridge_inverse(&i, -3.0), Err(ElmError::InvalidParameter(_))));
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&Matrix::zeros(2, 2).unwrap()).unwrap(), 0.0);
        assert_eq!(mse(&m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap(), 1.0);
        assert_eq!(mse(&m(&[&[3.0], &[4.0]])).unwrap(), 12.5);
    }

    #[test]
    fn sigmoid_cases() {
        assert_eq!(sigmoid_map(&m(&[&[0.0]])).get(0, 0), 0.5);
        for x in [40.0, 800.0, 1e300] {
            let y = sigmoid(x);
            assert!(y < 1.0 && y.is_finite());
        }
        for x in [-40.0, -800.0, -1e300] {
            let y = sigmoid(x);
            assert!(y > 0.0 && y.is_finite());
        }
    }

    #[test]
    fn logit_cases() {
        let clip = 1e-7;
        assert_eq!(logit_map(&m(&[&[0.5]]), clip).unwrap().get(0, 0), 0.0);
        let z = logit_map(&m(&[&[0.0]]), clip).unwrap().get(0, 0);
        assert!((z - (-(1.0 / 1e-7 - 1.0_f64).ln())).abs() < 1e-12);
        assert!((z + 16.118).abs() < 1e-3);
        let z = logit_map(&m(&[&[1.0]]), clip).unwrap().get(0, 0);
        assert!(z.is_finite() && z > 16.0);
        let back = logit_map(&sigmoid_map(&m(&[&[2.0]])), clip).unwrap();
        assert!((back.get(0, 0) - 2.0).abs() < 1e-9);
        assert!(logit_map(&m(&[&[0.5]]), 0.0).is_err());
        assert!(logit_map(&m(&[&[0.5]]), 0.5).is_err());
    }

    #[test]
    fn normalize_cases() {
        let (y, p) = normalize_unit(&m(&[&[0.0, 1.0]]), 1e-4).unwrap();
        assert_eq!(y.get(0, 0), 1e-4);
        assert_eq!(y.get(0, 1), 1.0);
        assert!(!p.is_degenerate());

        let (y, p) = normalize_unit(&m(&[&[5.0, 5.0]]), 1e-4).unwrap();
        assert_eq!(y.to_row_major(), vec![1.0, 1.0]);
        assert!(p.is_degenerate());
        assert_eq!(denormalize_unit(&y, &p).to_row_major(), vec![5.0, 5.0]);

        let p = NormParams { lo: 0.0, hi: 1.0, eps: 1e-4 };
        assert_eq!(denormalize_unit(&m(&[&[1.0]]), &p).get(0, 0), 1.0);
        let p = NormParams { lo: -2.0, hi: 3.0, eps: 1e-4 };
        assert_eq!(denormalize_unit(&m(&[&[1e-4]]), &p).get(0, 0), -2.0);

        assert!(normalize_unit(&m(&[&[1.0]]), 0.0).is_err());
    }

    #[test]
    fn column_helpers() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let s = a.select_columns(&[2, 0]).unwrap();
        assert_eq!(s.to_row_major(), vec![3.0, 1.0, 6.0, 4.0]);
        let r = a.column_range(1, 2).unwrap();
        assert_eq!(r.to_row_major(), vec![2.0, 3.0, 5.0, 6.0]);
        let h = Matrix::hstack(&[&r, &s]).unwrap();
        assert_eq!(h.shape(), (2, 4));
        assert!(a.select_columns(&[3]).is_err());
        assert!(a.column_range(2, 2).is_err());
    }

    #[test]
    fn serde_layout_is_row_major() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"rows":2,"cols":2,"data":[1.0,2.0,3.0,4.0]}"#);
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Matrix>(r#"{"rows":2,"cols":2,"data":[1.0]}"#).is_err());
    }
}
