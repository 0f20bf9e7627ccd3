//! Online-sequential readout: recursive least squares over chunks of hidden
//! activations. Each chunk is consumed by value and dropped once learned.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::linalg::{self, Matrix};

/// Sequential readout state.
///
/// `p` is the `L × L` inverse correlation `(I/c + Σ H Hᵀ)⁻¹` of everything
/// seen so far and `beta` the matching `L × t` ridge solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OselmState {
    pub p: Matrix,
    pub beta: Matrix,
    pub seen: usize,
    pub c: f64,
}

impl OselmState {
    pub fn hidden_dim(&self) -> usize {
        self.p.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.beta.cols()
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Initial block: `P = (I/c + H0 H0ᵀ)⁻¹`, `β = P H0 T0ᵀ`.
pub fn os_boot(h0: &Matrix, t0: &Matrix, c: f64) -> Result<OselmState> {
    if h0.cols() != t0.cols() {
        return Err(ElmError::shape(
            "os_boot",
            format!("H0 has {} samples, T0 has {}", h0.cols(), t0.cols()),
        ));
    }
    let gram = Matrix::wrap(&**h0 * h0.transpose().as_dmatrix());
    let mut p = linalg::ridge_inverse(&gram, c)?.into_dmatrix();
    symmetrize(&mut p);
    let beta = &p * (&**h0 * t0.transpose().as_dmatrix());
    Ok(OselmState {
        p: Matrix::wrap(p),
        beta: Matrix::wrap(beta),
        seen: h0.cols(),
        c,
    })
}

/// Learns one chunk of any size (including a single sample).
pub fn os_update(s: OselmState, hk: Matrix, tk: Matrix) -> Result<OselmState> {
    if hk.rows() != s.hidden_dim() || tk.rows() != s.output_dim() || hk.cols() != tk.cols() {
        return Err(ElmError::shape(
            "os_update",
            format!(
                "state is {}→{}, chunk is H {}x{}, T {}x{}",
                s.hidden_dim(),
                s.output_dim(),
                hk.rows(),
                hk.cols(),
                tk.rows(),
                tk.cols()
            ),
        ));
    }
    let p = s.p.into_dmatrix();
    let beta = s.beta.into_dmatrix();
    let h = hk.into_dmatrix();
    let t = tk.into_dmatrix();

    // P' = P - P H (I + Hᵀ P H)⁻¹ Hᵀ P
    let ph = &p * &h;
    let mut inner = h.transpose() * &ph;
    for i in 0..inner.nrows() {
        inner[(i, i)] += 1.0;
    }
    let inner_inv = linalg::spd_inverse(inner, "os_update")?;
    let mut p_next = &p - &ph * inner_inv * ph.transpose();
    symmetrize(&mut p_next);

    // β' = β + P' H (Tᵀ - Hᵀ β)
    let innovation = t.transpose() - h.transpose() * &beta;
    let beta_next = beta + &p_next * &h * innovation;
    if beta_next.iter().any(|v| !v.is_finite()) {
        return Err(ElmError::InvalidInput("sequential update diverged".into()));
    }
    Ok(OselmState {
        p: Matrix::wrap(p_next),
        beta: Matrix::wrap(beta_next),
        seen: s.seen + h.ncols(),
        c: s.c,
    })
}

/// `βᵀ H`.
pub fn os_predict(s: &OselmState, h: &Matrix) -> Result<Matrix> {
    if h.rows() != s.hidden_dim() {
        return Err(ElmError::shape(
            "os_predict",
            format!("state expects {} rows, got {}", s.hidden_dim(), h.rows()),
        ));
    }
    Ok(Matrix::wrap(s.beta.transpose().as_dmatrix() * &**h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elm;
    use crate::seed;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seed::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn boot_large_c_matches_pinv() {
        let h0 = Matrix::identity(2).unwrap();
        let t0 = Matrix::identity(2).unwrap();
        let s = os_boot(&h0, &t0, 1e12).unwrap();
        let oracle = elm::fit_output(&h0, &t0).unwrap();
        assert!((&*s.beta - &*oracle.beta).norm() < 1e-6);
        assert_eq!(s.seen, 2);
    }

    #[test]
    fn boot_zero_targets_and_symmetry() {
        let h0 = random(5, 7, 1);
        let s = os_boot(&h0, &Matrix::zeros(2, 7).unwrap(), 10.0).unwrap();
        assert_eq!(s.beta.norm(), 0.0);
        assert!((&*s.p - s.p.transpose().as_dmatrix()).norm() <= 1e-10 * s.p.norm());
        assert!(os_boot(&h0, &Matrix::zeros(2, 6).unwrap(), 1.0).is_err());
        assert!(os_boot(&h0, &Matrix::zeros(2, 7).unwrap(), 0.0).is_err());
    }

    #[test]
    fn rank_one_update_matches_batch() {
        let h = random(6, 15, 3);
        let t = random(2, 15, 4);
        let s = os_boot(&h.column_range(0, 14).unwrap(), &t.column_range(0, 14).unwrap(), 100.0)
            .unwrap();
        let s = os_update(s, h.column_range(14, 1).unwrap(), t.column_range(14, 1).unwrap())
            .unwrap();
        let batch = elm::fit_output_ridge(&h, &t, 100.0).unwrap();
        assert!(rel(&s.beta, &batch.beta) < 1e-6);
        assert_eq!(s.seen, 15);
    }

    #[test]
    fn zero_innovation_chunk_leaves_beta() {
        let h = random(4, 10, 5);
        let t = random(2, 10, 6);
        let s = os_boot(&h, &t, 100.0).unwrap();
        // targets produced by the current readout carry no new information
        let hk = random(4, 3, 7);
        let tk = os_predict(&s, &hk).unwrap();
        let before = s.beta.clone();
        let s = os_update(s, hk, tk).unwrap();
        assert!((&*s.beta - &*before).norm() < 1e-8);
    }

    #[test]
    fn two_chunks_equal_one_concatenated() {
        let h = random(5, 20, 8);
        let t = random(3, 20, 9);
        let boot = os_boot(&h.column_range(0, 6).unwrap(), &t.column_range(0, 6).unwrap(), 50.0)
            .unwrap();
        let a = os_update(
            boot.clone(),
            h.column_range(6, 5).unwrap(),
            t.column_range(6, 5).unwrap(),
        )
        .unwrap();
        let a = os_update(a, h.column_range(11, 9).unwrap(), t.column_range(11, 9).unwrap())
            .unwrap();
        let b = os_update(boot, h.column_range(6, 14).unwrap(), t.column_range(6, 14).unwrap())
            .unwrap();
        assert!(rel(&a.beta, &b.beta) < 1e-6);
        assert_eq!(a.seen, b.seen);
    }

    #[test]
    fn predict_properties() {
        let s = OselmState {
            p: Matrix::identity(3).unwrap(),
            beta: Matrix::zeros(3, 2).unwrap(),
            seen: 1,
            c: 1.0,
        };
        assert_eq!(os_predict(&s, &random(3, 4, 1)).unwrap().norm(), 0.0);
        assert!(os_predict(&s, &random(2, 4, 1)).is_err());

        let h = random(4, 9, 10);
        let t = random(2, 9, 11);
        let s = os_boot(&h, &t, 20.0).unwrap();
        let ridge = elm::fit_output_ridge(&h, &t, 20.0).unwrap();
        let x = random(4, 5, 12);
        let ours = os_predict(&s, &x).unwrap();
        let oracle = elm::readout(&ridge, &x).unwrap();
        assert!((&*ours - &*oracle).norm() < 1e-8);

        let perm = [3, 0, 4, 1, 2];
        let permuted = os_predict(&s, &x.select_columns(&perm).unwrap()).unwrap();
        assert_eq!(*permuted, *ours.select_columns(&perm).unwrap());
    }

    #[test]
    fn p_stays_positive_definite() {
        let h = random(5, 30, 13);
        let t = random(2, 30, 14);
        let mut s = os_boot(&h.column_range(0, 2).unwrap(), &t.column_range(0, 2).unwrap(), 100.0)
            .unwrap();
        for k in 2..30 {
            s = os_update(s, h.column_range(k, 1).unwrap(), t.column_range(k, 1).unwrap()).unwrap();
            let eig = s.p.as_dmatrix().clone().symmetric_eigenvalues();
            assert!(eig.min() > 0.0);
            assert!((&*s.p - s.p.transpose().as_dmatrix()).norm() <= 1e-8 * s.p.norm());
        }
    }

    #[test]
    fn update_rejects_mismatched_chunk() {
        let s = os_boot(&random(3, 4, 1), &random(2, 4, 2), 1.0).unwrap();
        assert!(os_update(s.clone(), random(2, 3, 1), random(2, 3, 1)).is_err());
        assert!(os_update(s.clone(), random(3, 3, 1), random(1, 3, 1)).is_err());
        assert!(os_update(s, random(3, 3, 1), random(2, 2, 1)).is_err());
    }
}
