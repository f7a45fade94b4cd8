//! Random model builders shared by the integration tests.
#![allow(dead_code)]

use clampmrf::{ModelBuilder, PairwiseModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub enum Couplings {
    /// Arbitrary tables with entries in `[-w, w] / 2`.
    Mixed,
    /// Binary with `W in [0, w]`.
    Attractive,
}

/// Random connected-ish model: a spanning path plus each other pair with
/// probability `density`. Labels are drawn from `2..=max_labels`.
pub fn random_model(seed: u64, n: usize, max_labels: usize, density: f64, w: f64, kind: Couplings) -> PairwiseModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = match kind {
        Couplings::Attractive => vec![2; n],
        Couplings::Mixed => (0..n).map(|_| rng.gen_range(2..=max_labels)).collect(),
    };
    let mut b = ModelBuilder::new(labels.clone());
    for (i, &l) in labels.iter().enumerate() {
        b = b.unary(i, (0..l).map(|_| rng.gen_range(-2.0..=2.0)).collect());
    }
    for i in 0..n {
        for j in i + 1..n {
            if j != i + 1 && !rng.gen_bool(density) {
                continue;
            }
            let table = match kind {
                Couplings::Mixed => (0..labels[i] * labels[j]).map(|_| rng.gen_range(-w..=w) / 2.0).collect(),
                Couplings::Attractive => {
                    let c = rng.gen_range(0.0..=w) / 2.0;
                    vec![c, 0.0, 0.0, c]
                }
            };
            b = b.edge(i, j, table);
        }
    }
    b.build().expect("valid random model")
}

/// Binary mixed model, the common case for heuristics.
pub fn random_binary(seed: u64, n: usize, density: f64, w: f64) -> PairwiseModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.gen_bool(density) {
                edges.push((i, j, rng.gen_range(-w..=w)));
            }
        }
    }
    PairwiseModel::from_binary(&theta, &edges).expect("valid binary model")
}
