#![allow(dead_code)]

use hergm_core::{BlockAssignment, CovariateSet, Graph, ModelParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edge_list(edges, n).unwrap()
}

pub fn random_covariates(n: usize, p: usize, categories: u32, rng: &mut impl Rng) -> CovariateSet {
    if p == 0 {
        return CovariateSet::empty(n);
    }
    let names = (0..p).map(|s| format!("c{s}")).collect();
    let cols = (0..p)
        .map(|_| (0..n).map(|_| rng.random_range(0..categories)).collect())
        .collect();
    CovariateSet::from_columns(names, cols).unwrap()
}

pub fn random_blocks(n: usize, k: usize, rng: &mut impl Rng) -> BlockAssignment {
    BlockAssignment::new((0..n).map(|_| rng.random_range(0..k)).collect(), k).unwrap()
}

pub fn random_params(p: usize, scale: f64, rng: &mut impl Rng) -> ModelParams {
    let mut u = || scale * (2.0 * rng.random::<f64>() - 1.0);
    ModelParams {
        alpha_w: u(),
        alpha_b: u(),
        psi: u(),
        gamma: u(),
        beta_w: (0..p).map(|_| u()).collect(),
        beta_b: (0..p).map(|_| u()).collect(),
    }
}

/// Rows drawn uniformly from the simplex interior.
pub fn random_xi(n: usize, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut xi = Array2::from_shape_fn((n, k), |_| -(rng.random::<f64>().max(1e-12)).ln());
    for mut row in xi.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    xi
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
