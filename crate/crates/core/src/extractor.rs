//! First layer: subnetwork nodes that each emit a linear subspace feature and
//! are refined once by error feedback from a least-squares readout.
//!
//! For every node the pass is: random projection → readout of the targets
//! from the projection → residual → residual pulled back through the
//! readout and renormalized into `(0, 1]` → least-squares refit of the
//! projection towards that feedback target (damped by `lambda`) → re-project.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};
use crate::linalg::{self, Matrix, DEFAULT_NORM_EPS};
use crate::seed;

/// Projection `a_f` (`d × n`) with scalar bias `b_f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubnetNode {
    pub a_f: Matrix,
    pub b_f: f64,
}

impl SubnetNode {
    pub fn neurons(&self) -> usize {
        self.a_f.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.a_f.cols()
    }
}

/// The `d × M` output of one node over a sample block.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceFeature {
    pub h: Matrix,
}

/// Least-squares readout of the targets from one subspace feature.
#[derive(Clone, Debug, PartialEq)]
pub struct LsReadout {
    pub a_h: Matrix,
    /// Root-mean-square error of `a_h · h` against the targets.
    pub b_h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub nodes: usize,
    pub neurons: usize,
    pub lambda: f64,
    pub eps_norm: f64,
    pub seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            nodes: 3,
            neurons: 100,
            lambda: 0.5,
            eps_norm: DEFAULT_NORM_EPS,
            seed: 0,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.neurons == 0 {
            return Err(ElmError::InvalidParameter(
                "extractor needs at least one node and one neuron".into(),
            ));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(ElmError::InvalidParameter(format!(
                "lambda must be a finite value >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.eps_norm > 0.0 && self.eps_norm < 0.5) {
            return Err(ElmError::InvalidParameter(format!(
                "eps_norm must lie in (0, 0.5), got {}",
                self.eps_norm
            )));
        }
        Ok(())
    }
}

/// Random node with entries and bias uniform on `[-1, 1]`.
pub fn spawn_node(input_dim: usize, neurons: usize, seed: u64) -> Result<SubnetNode> {
    if input_dim == 0 || neurons == 0 {
        return Err(ElmError::InvalidParameter(format!(
            "subnetwork node needs positive dimensions, got n={input_dim}, d={neurons}"
        )));
    }
    let mut rng = seed::rng(seed);
    let a_f = Matrix::from_fn(neurons, input_dim, |_, _| rng.random_range(-1.0..=1.0))?;
    let b_f = rng.random_range(-1.0..=1.0);
    Ok(SubnetNode { a_f, b_f })
}

/// `h = a_f · X + b_f`, no activation.
pub fn project(node: &SubnetNode, x: &Matrix) -> Result<SubspaceFeature> {
    if x.rows() != node.input_dim() {
        return Err(ElmError::shape(
            "project",
            format!("node expects {} input rows, got {}", node.input_dim(), x.rows()),
        ));
    }
    let b = node.b_f;
    let h = (&*node.a_f * &**x).map(|v| v + b);
    Ok(SubspaceFeature { h: Matrix::wrap(h) })
}

fn check_samples(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(ElmError::shape(
            op,
            format!("sample counts differ: {} vs {}", a.cols(), b.cols()),
        ));
    }
    Ok(())
}

/// `a_h = Y · h†`, `b_h = sqrt(mse(a_h · h − Y))`.
pub fn ls_readout(feature: &SubspaceFeature, y: &Matrix) -> Result<LsReadout> {
    check_samples("ls_readout", &feature.h, y)?;
    let a_h = &**y * linalg::pinv_auto(&feature.h)?;
    let b_h = linalg::mse_raw(&(&a_h * &*feature.h - &**y)).sqrt();
    Ok(LsReadout {
        a_h: Matrix::wrap(a_h),
        b_h,
    })
}

/// `e = Y − (a_h · h + b_h)`.
pub fn residual(feature: &SubspaceFeature, r: &LsReadout, y: &Matrix) -> Result<Matrix> {
    check_samples("residual", &feature.h, y)?;
    if r.a_h.rows() != y.rows() || r.a_h.cols() != feature.h.rows() {
        return Err(ElmError::shape(
            "residual",
            format!(
                "readout is {}x{}, feature has {} rows, targets {}",
                r.a_h.rows(),
                r.a_h.cols(),
                feature.h.rows(),
                y.rows()
            ),
        ));
    }
    let b = r.b_h;
    let fit = (&*r.a_h * &*feature.h).map(|v| v + b);
    Ok(Matrix::wrap(&**y - fit))
}

/// Feedback target `u(a_h† · e + h)`, entrywise in `(0, 1]`.
pub fn error_feedback(
    e: &Matrix,
    r: &LsReadout,
    feature: &SubspaceFeature,
    eps_norm: f64,
) -> Result<Matrix> {
    check_samples("error_feedback", e, &feature.h)?;
    if r.a_h.rows() != e.rows() || r.a_h.cols() != feature.h.rows() {
        return Err(ElmError::shape(
            "error_feedback",
            format!(
                "readout is {}x{}, residual has {} rows, feature {}",
                r.a_h.rows(),
                r.a_h.cols(),
                e.rows(),
                feature.h.rows()
            ),
        ));
    }
    let pulled = linalg::pinv_auto(&r.a_h)? * &**e;
    let raw = Matrix::wrap(pulled + &*feature.h);
    Ok(linalg::normalize_unit(&raw, eps_norm)?.0)
}

/// Least-squares refit of the projection towards the feedback target,
/// damped against the previous projection.
pub fn refine_node(node: &SubnetNode, x: &Matrix, target: &Matrix, lambda: f64) -> Result<SubnetNode> {
    check_samples("refine_node", x, target)?;
    if x.rows() != node.input_dim() || target.rows() != node.neurons() {
        return Err(ElmError::shape(
            "refine_node",
            format!(
                "node is {}x{}, X has {} rows, target {}",
                node.neurons(),
                node.input_dim(),
                x.rows(),
                target.rows()
            ),
        ));
    }
    let xxt: DMatrix<f64> = &**x * x.transpose().as_dmatrix();
    let a_temp = &**target * x.transpose().as_dmatrix() * linalg::pinv_auto(&xxt)?;
    let a_f = &a_temp + (&a_temp - &*node.a_f) * lambda;
    let b_f = linalg::mse_raw(&(&a_f * &**x - &**target)).sqrt();
    Ok(SubnetNode {
        a_f: Matrix::from_dmatrix(a_f)?,
        b_f,
    })
}

/// One spawn-and-refine pass for a single node. Returns the refined node
/// together with its re-projected feature.
pub fn build_node(x: &Matrix, y: &Matrix, cfg: &ExtractorConfig, node_seed: u64) -> Result<(SubnetNode, SubspaceFeature)> {
    let node = spawn_node(x.rows(), cfg.neurons, node_seed)?;
    let feature = project(&node, x)?;
    let readout = ls_readout(&feature, y)?;
    let e = residual(&feature, &readout, y)?;
    let target = error_feedback(&e, &readout, &feature, cfg.eps_norm)?;
    let refined = refine_node(&node, x, &target, cfg.lambda)?;
    let feature = project(&refined, x)?;
    Ok((refined, feature))
}

/// Seed of node `index` under a given extractor seed.
pub fn node_seed(cfg_seed: u64, index: usize) -> u64 {
    seed::derive(cfg_seed, index as u64)
}

/// Generates `cfg.nodes` refined subnetwork nodes and their subspace features.
pub fn extract_features(
    x: &Matrix,
    y: &Matrix,
    cfg: &ExtractorConfig,
) -> Result<(Vec<SubnetNode>, Vec<SubspaceFeature>)> {
    cfg.validate()?;
    check_samples("extract_features", x, y)?;
    let mut nodes = Vec::with_capacity(cfg.nodes);
    let mut features = Vec::with_capacity(cfg.nodes);
    for c in 0..cfg.nodes {
        let (node, feature) = build_node(x, y, cfg, node_seed(cfg.seed, c))?;
        nodes.push(node);
        features.push(feature);
    }
    Ok((nodes, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seed::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn spawn_is_seeded() {
        let a = spawn_node(5, 3, 1).unwrap();
        assert_eq!(a, spawn_node(5, 3, 1).unwrap());
        assert_ne!(a, spawn_node(5, 3, 2).unwrap());
        assert_eq!(a.a_f.shape(), (3, 5));
        assert!((-1.0..=1.0).contains(&a.b_f));
        assert!(spawn_node(0, 3, 1).is_err());
        assert!(spawn_node(3, 0, 1).is_err());
    }

    #[test]
    fn project_cases() {
        let x = random(3, 4, 2);
        let id = SubnetNode { a_f: Matrix::identity(3).unwrap(), b_f: 0.0 };
        assert_eq!(project(&id, &x).unwrap().h, x);

        let node = spawn_node(3, 2, 4).unwrap();
        let f = project(&node, &Matrix::zeros(3, 4).unwrap()).unwrap();
        assert!(f.h.iter().all(|&v| v == node.b_f));

        let node = spawn_node(3, 3, 5).unwrap();
        let f = project(&node, &x).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                let dot: f64 = (0..3).map(|k| node.a_f.get(r, k) * x.get(k, c)).sum();
                assert!((f.h.get(r, c) - (dot + node.b_f)).abs() < 1e-14);
            }
        }
        assert!(project(&node, &random(2, 4, 1)).is_err());
    }

    #[test]
    fn readout_exact_and_zero() {
        let f = SubspaceFeature { h: random(4, 4, 6) };
        let y = random(2, 4, 7);
        let r = ls_readout(&f, &y).unwrap();
        assert!((&*r.a_h * &*f.h - &*y).norm() < 1e-8);
        assert!(r.b_h <= 1e-8);

        let r = ls_readout(&f, &Matrix::zeros(2, 4).unwrap()).unwrap();
        assert_eq!(r.a_h.norm(), 0.0);
        assert_eq!(r.b_h, 0.0);
        assert!(ls_readout(&f, &random(2, 5, 1)).is_err());
    }

    #[test]
    fn readout_matches_normal_equations() {
        // t=2, d=5, M=20
        let f = SubspaceFeature { h: random(5, 20, 8) };
        let y = random(2, 20, 9);
        let r = ls_readout(&f, &y).unwrap();
        let ours = (&*r.a_h * &*f.h - &*y).norm();
        let h = f.h.as_dmatrix();
        let oracle_a = &*y * h.transpose() * (h * h.transpose()).try_inverse().unwrap();
        let oracle = (oracle_a * h - &*y).norm();
        assert!(ours <= oracle + 1e-8);
        assert!((r.b_h - (ours * ours / 40.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn residual_cases() {
        let f = SubspaceFeature { h: random(3, 3, 10) };
        let y = random(2, 3, 11);
        let r = ls_readout(&f, &y).unwrap();
        let e = residual(&f, &r, &y).unwrap();
        assert!(e.amax() <= r.b_h + 1e-8);

        let r = LsReadout { a_h: random(2, 3, 12), b_h: 0.25 };
        let exact = Matrix::wrap((&*r.a_h * &*f.h).map(|v| v + 0.25));
        assert!(residual(&f, &r, &exact).unwrap().norm() < 1e-15);

        let y2 = random(2, 3, 13);
        let sum = Matrix::wrap(&*y + &*y2);
        let lhs = residual(&f, &r, &sum).unwrap();
        let rhs = &*residual(&f, &r, &y).unwrap() + &*residual(&f, &r, &y2).unwrap() + &*exact;
        assert!((&*lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn feedback_cases() {
        let f = SubspaceFeature { h: random(3, 6, 14) };
        let r = LsReadout { a_h: random(2, 3, 15), b_h: 0.1 };
        let zero = Matrix::zeros(2, 6).unwrap();
        let fb = error_feedback(&zero, &r, &f, 1e-4).unwrap();
        let (want, _) = linalg::normalize_unit(&f.h, 1e-4).unwrap();
        assert!((&*fb - &*want).norm() < 1e-15);

        let e = random(2, 6, 16);
        let fb = error_feedback(&e, &r, &f, 1e-4).unwrap();
        assert!(fb.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(error_feedback(&random(3, 6, 1), &r, &f, 1e-4).is_err());
    }

    #[test]
    fn feedback_pinv_is_inverse_for_square_readout() {
        let a = random(3, 3, 17);
        let e = random(3, 5, 18);
        let via_pinv = linalg::pinv_auto(&a).unwrap() * &*e;
        let via_inv = a.as_dmatrix().clone().try_inverse().unwrap() * &*e;
        assert!((via_pinv - via_inv).norm() < 1e-9);
    }

    #[test]
    fn refine_cases() {
        let x = random(3, 12, 19);
        let node = spawn_node(3, 4, 20).unwrap();
        let target = random(4, 12, 21);

        let r0 = refine_node(&node, &x, &target, 0.0).unwrap();
        let xd = x.as_dmatrix();
        let a_temp = &*target * xd.transpose() * (xd * xd.transpose()).try_inverse().unwrap();
        assert!((&*r0.a_f - &a_temp).norm() < 1e-10);
        let b = ((&*r0.a_f * xd - &*target).norm_squared() / 48.0).sqrt();
        assert!((r0.b_f - b).abs() < 1e-12);

        let r1 = refine_node(&node, &x, &target, 0.5).unwrap();
        let want = &a_temp * 1.5 - &*node.a_f * 0.5;
        assert!((&*r1.a_f - want).norm() < 1e-10);

        assert!(refine_node(&node, &random(2, 12, 1), &target, 0.0).is_err());
        assert!(refine_node(&node, &x, &random(3, 12, 1), 0.0).is_err());
    }

    #[test]
    fn refine_recovers_planted_projection() {
        let x = random(4, 15, 22);
        let planted = random(3, 4, 23);
        let target = Matrix::wrap(&*planted * &*x);
        let node = spawn_node(4, 3, 24).unwrap();
        let r = refine_node(&node, &x, &target, 0.0).unwrap();
        assert!((&*r.a_f - &*planted).amax() < 1e-8);
        assert!(r.b_f <= 1e-6);
    }

    #[test]
    fn extract_shapes_and_determinism() {
        let x = random(6, 30, 25);
        let y = random(2, 30, 26);
        let cfg = ExtractorConfig { nodes: 1, neurons: 4, seed: 3, ..Default::default() };
        let (nodes, feats) = extract_features(&x, &y, &cfg).unwrap();
        assert_eq!((nodes.len(), feats.len()), (1, 1));

        let cfg = ExtractorConfig { nodes: 4, neurons: 5, seed: 9, ..Default::default() };
        let (n1, f1) = extract_features(&x, &y, &cfg).unwrap();
        let (n2, f2) = extract_features(&x, &y, &cfg).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(f1, f2);
        assert!(f1.iter().all(|f| f.h.shape() == (5, 30)));
        for (n, f) in n1.iter().zip(&f1) {
            assert_eq!(project(n, &x).unwrap(), *f);
        }

        let bad = ExtractorConfig { lambda: -1.0, ..cfg.clone() };
        assert!(extract_features(&x, &y, &bad).is_err());
        assert!(extract_features(&x, &random(2, 29, 1), &cfg).is_err());
    }
}
