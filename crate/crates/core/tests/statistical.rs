//! Properties that hold on most, not all, random instances.

use rand::Rng;

use hoselm::bench;
use hoselm::classifier;
use hoselm::extractor::{self, ExtractorConfig};
use hoselm::linalg::Matrix;
use hoselm::seed;

fn uniform(rng: &mut seed::Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

fn readout_rms(x: &Matrix, y: &Matrix, node: &extractor::SubnetNode) -> f64 {
    let f = extractor::project(node, x).unwrap();
    extractor::ls_readout(&f, y).unwrap().b_h
}

/// Number of 50 random trials where the refined node's readout residual does
/// not exceed that of the node it was refined from.
fn refinement_rate(cfg: &ExtractorConfig, neurons: impl Fn(&mut seed::Rng, usize) -> usize) -> usize {
    let mut rng = seed::rng(31);
    let mut improved = 0;
    for trial in 0..50 {
        let n = rng.random_range(8..=16);
        let d = neurons(&mut rng, n);
        let m = rng.random_range(40..=80);
        let x = uniform(&mut rng, n, m);
        let teacher = uniform(&mut rng, 3, n);
        let labels = classifier::decode_labels(&Matrix::from_dmatrix(teacher.as_dmatrix() * x.as_dmatrix()).unwrap());
        let y = bench::one_hot(&labels, 3).unwrap();

        let cfg = ExtractorConfig { neurons: d, ..cfg.clone() };
        let s = extractor::node_seed(trial, 0);
        let raw = extractor::spawn_node(n, d, s).unwrap();
        let (refined, _) = extractor::build_node(&x, &y, &cfg, s).unwrap();
        // relative slack absorbs round-off when both readouts span the same space
        if readout_rms(&x, &y, &refined) <= readout_rms(&x, &y, &raw) * (1.0 + 1e-9) {
            improved += 1;
        }
    }
    improved
}

#[test]
fn undamped_refinement_lowers_readout_residual() {
    // d < n: the projection is a proper subspace, so the refit can matter
    let cfg = ExtractorConfig { lambda: 0.0, ..Default::default() };
    let improved = refinement_rate(&cfg, |rng, n| rng.random_range(2..n));
    println!("undamped refinement kept or lowered the residual on {improved}/50 trials");
    assert!(improved >= 40, "only {improved}/50");
}

#[test]
fn default_refinement_never_hurts_the_readout() {
    let cfg = ExtractorConfig::default();
    let improved = refinement_rate(&cfg, |_, _| cfg.neurons);
    println!("default refinement kept or lowered the residual on {improved}/50 trials");
    assert!(improved >= 40, "only {improved}/50");
}

#[test]
fn adding_a_node_rarely_lowers_training_accuracy() {
    let mut rng = seed::rng(47);
    let max_nodes = 8;
    let (mut steps, mut kept) = (0, 0);
    for _ in 0..40 {
        let d = rng.random_range(4..=12);
        let m = rng.random_range(30..=80);
        let classes = rng.random_range(2..=4);
        let h = uniform(&mut rng, d, m);
        let teacher = uniform(&mut rng, classes, d);
        let labels = classifier::decode_labels(&Matrix::from_dmatrix(teacher.as_dmatrix() * h.as_dmatrix()).unwrap());
        let t = bench::one_hot(&labels, classes).unwrap();

        let model = classifier::fit(&h, &t, max_nodes, 100.0).unwrap();
        let mut prev = None;
        for k in 1..=model.nodes.len() {
            let prefix = classifier::ClassifierModel { nodes: model.nodes[..k].to_vec(), ..model.clone() };
            let predicted = classifier::decode_labels(&classifier::score(&prefix, &h).unwrap());
            let hits = predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
            if let Some(before) = prev {
                steps += 1;
                kept += (hits >= before) as usize;
            }
            prev = Some(hits);
        }
    }
    println!("training accuracy kept or rose on {kept}/{steps} added nodes");
    assert!(kept * 10 >= steps * 9, "only {kept}/{steps}");
}
