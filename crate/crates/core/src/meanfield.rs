//! Naive mean field: coordinate ascent over fully factorized distributions.
//!
//! The objective is
//! `F(q) = Σ_i Σ_x θ_i(x) q_i(x) + Σ_ij Σ θ_ij(x_i, x_j) q_i(x_i) q_j(x_j) + Σ_i H(q_i)`,
//! whose maximum is a lower bound on `log Z`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::logspace::{entropy, softmax_in_place};
use crate::model::PairwiseModel;
use crate::result::{Bound, InferenceResult, Marginals, Method};

/// One distribution per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedMarginals {
    probs: Vec<Vec<f64>>,
}

impl FactorizedMarginals {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (i, p) in probs.iter().enumerate() {
            if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::input(format!("marginal of variable {i} has a negative or non-finite entry")));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::input(format!("marginal of variable {i} sums to {s}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(model: &PairwiseModel) -> Self {
        Self {
            probs: model.labels().iter().map(|&l| vec![1.0 / l as f64; l]).collect(),
        }
    }

    /// Independent symmetric Dirichlet(1) draws.
    pub fn random(model: &PairwiseModel, rng: &mut ChaCha8Rng) -> Self {
        let probs = model
            .labels()
            .iter()
            .map(|&l| {
                let mut p: Vec<f64> = (0..l).map(|_| Exp1.sample(rng)).collect();
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= s);
                p
            })
            .collect();
        Self { probs }
    }

    pub fn get(&self, var: usize) -> &[f64] {
        &self.probs[var]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slices(&self) -> &[Vec<f64>] {
        &self.probs
    }

    fn check_shape(&self, model: &PairwiseModel) -> Result<()> {
        if self.probs.len() != model.n()
            || self.probs.iter().zip(model.labels()).any(|(p, &l)| p.len() != l)
        {
            return Err(Error::input("marginals do not match the model's variables"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MfInit {
    Uniform,
    Random,
    Warm(FactorizedMarginals),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MfConfig {
    /// Stop when the largest per-variable L∞ change in a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// The first restart uses `init`; later ones draw random marginals.
    pub restarts: usize,
    pub seed: u64,
    pub init: MfInit,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 10_000,
            restarts: 5,
            seed: 0,
            init: MfInit::Random,
        }
    }
}

impl MfConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_sweeps == 0 || self.restarts == 0 {
            return Err(Error::input("mean field needs tol > 0, max_sweeps >= 1 and restarts >= 1"));
        }
        Ok(())
    }
}

pub fn mf_free_energy(model: &PairwiseModel, q: &FactorizedMarginals) -> Result<f64> {
    q.check_shape(model)?;
    Ok(free_energy(model, &q.probs))
}

fn free_energy(model: &PairwiseModel, q: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (i, qi) in q.iter().enumerate() {
        total += model.unary(i).iter().zip(qi).map(|(t, p)| t * p).sum::<f64>();
        total += entropy(qi);
    }
    for e in model.edges() {
        let (qi, qj) = (&q[e.i], &q[e.j]);
        for (a, pa) in qi.iter().enumerate() {
            for (b, pb) in qj.iter().enumerate() {
                total += e.value(a, b) * pa * pb;
            }
        }
    }
    total
}

/// Replaces `q[var]` with its coordinate-wise optimum; returns the L∞ change.
fn update_in_place(model: &PairwiseModel, q: &mut [Vec<f64>], var: usize) -> f64 {
    let mut field = model.unary(var).to_vec();
    for &(j, e) in model.neighbors(var) {
        let edge = model.edge(e);
        for (x, f) in field.iter_mut().enumerate() {
            *f += q[j].iter().enumerate().map(|(y, p)| edge.value_from(var, x, y) * p).sum::<f64>();
        }
    }
    softmax_in_place(&mut field);
    let change = field
        .iter()
        .zip(&q[var])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    q[var] = field;
    change
}

/// Single coordinate update of `var`; every other marginal is left untouched.
pub fn mf_update(model: &PairwiseModel, q: &FactorizedMarginals, var: usize) -> Result<FactorizedMarginals> {
    q.check_shape(model)?;
    if var >= model.n() {
        return Err(Error::input(format!("variable {var} out of range")));
    }
    let mut out = q.clone();
    update_in_place(model, &mut out.probs, var);
    Ok(out)
}

struct Run {
    q: Vec<Vec<f64>>,
    value: f64,
    sweeps: usize,
    converged: bool,
}

fn ascend(model: &PairwiseModel, mut q: Vec<Vec<f64>>, cfg: &MfConfig) -> Run {
    let mut sweeps = 0;
    let mut converged = model.n() == 0;
    while !converged && sweeps < cfg.max_sweeps {
        let mut change: f64 = 0.0;
        for v in 0..model.n() {
            change = change.max(update_in_place(model, &mut q, v));
        }
        sweeps += 1;
        converged = change < cfg.tol;
    }
    let value = free_energy(model, &q);
    Run {
        q,
        value,
        sweeps,
        converged,
    }
}

/// Best mean-field lower bound over `cfg.restarts` coordinate-ascent runs.
pub fn mf_optimize(model: &PairwiseModel, cfg: &MfConfig) -> Result<InferenceResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Run> = None;
    for r in 0..cfg.restarts {
        let init = match (&cfg.init, r) {
            (MfInit::Uniform, 0) => FactorizedMarginals::uniform(model),
            (MfInit::Warm(q), 0) => {
                q.check_shape(model)?;
                q.clone()
            }
            _ => FactorizedMarginals::random(model, &mut rng),
        };
        let run = ascend(model, init.probs, cfg);
        if best.as_ref().map_or(true, |b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(InferenceResult {
        log_z: best.value,
        marginals: Marginals::Factorized(FactorizedMarginals { probs: best.q }),
        method: Method::MeanField,
        bound: Bound::Lower,
        converged: best.converged,
        iters: best.sweeps,
        wall_time: start.elapsed().as_secs_f64(),
        messages: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::brute_logz;
    use crate::model::ModelBuilder;

    fn single(theta: Vec<f64>) -> PairwiseModel {
        ModelBuilder::new(vec![theta.len()]).unary(0, theta).build().unwrap()
    }

    #[test]
    fn free_energy_of_single_variable() {
        let m = single(vec![0.0, 0.0]);
        let u = FactorizedMarginals::new(vec![vec![0.5, 0.5]]).unwrap();
        assert!((mf_free_energy(&m, &u).unwrap() - 2f64.ln()).abs() < 1e-15);
        let d = FactorizedMarginals::new(vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(mf_free_energy(&m, &d).unwrap(), 0.0);
    }

    #[test]
    fn free_energy_term_by_term() {
        // W = 2 gives θ_12 = diag(1, 1), so the pair term is ¼ + ¼ under uniform q
        let m = PairwiseModel::from_binary(&[0.0, 0.0], &[(0, 1, 2.0)]).unwrap();
        let q = FactorizedMarginals::uniform(&m);
        let expect = 0.5 + 2.0 * 2f64.ln();
        assert!((mf_free_energy(&m, &q).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_input_error() {
        let m = single(vec![0.0, 0.0]);
        let q = FactorizedMarginals::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        assert!(matches!(mf_free_energy(&m, &q), Err(Error::Input(_))));
        assert!(FactorizedMarginals::new(vec![vec![0.7, 0.7]]).is_err());
    }

    #[test]
    fn isolated_update_is_exact_marginal() {
        let m = single(vec![0.3, -1.0, 2.0]);
        let q = FactorizedMarginals::new(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let out = mf_update(&m, &q, 0).unwrap();
        let z: f64 = [0.3f64, -1.0, 2.0].iter().map(|t| t.exp()).sum();
        for (x, t) in [0.3f64, -1.0, 2.0].iter().enumerate() {
            assert!((out.get(0)[x] - t.exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn update_hand_value_with_pinned_neighbor() {
        // W = 6: θ_12 = diag(3, 3); neighbor pinned to label 0 → field (3, 0)
        let m = PairwiseModel::from_binary(&[0.0, 0.0], &[(0, 1, 6.0)]).unwrap();
        let q = FactorizedMarginals::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let out = mf_update(&m, &q, 0).unwrap();
        let e3 = 3f64.exp();
        assert!((out.get(0)[0] - e3 / (e3 + 1.0)).abs() < 1e-15);
        assert_eq!(out.get(1), q.get(1));
    }

    #[test]
    fn update_never_decreases_free_energy() {
        let m = PairwiseModel::from_binary(&[0.4, -0.3, 1.0], &[(0, 1, -3.0), (1, 2, 2.5), (0, 2, 1.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut q = FactorizedMarginals::random(&m, &mut rng);
        for step in 0..30 {
            let before = mf_free_energy(&m, &q).unwrap();
            q = mf_update(&m, &q, step % 3).unwrap();
            assert!(mf_free_energy(&m, &q).unwrap() >= before - 1e-12);
        }
    }

    #[test]
    fn optimize_is_exact_for_independent_variables() {
        let m = PairwiseModel::from_binary(&[1.0, -0.5, 0.0], &[]).unwrap();
        let r = mf_optimize(&m, &MfConfig::default()).unwrap();
        assert!((r.log_z - brute_logz(&m).unwrap()).abs() < 1e-12);
        assert!(r.converged);
        assert_eq!(r.bound, Bound::Lower);
    }

    #[test]
    fn strong_complete_graph_loses_log_two() {
        let mut edges = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((i, j, 12.0));
            }
        }
        let m = PairwiseModel::from_binary(&[0.0; 5], &edges).unwrap();
        let r = mf_optimize(&m, &MfConfig::default()).unwrap();
        let gap = brute_logz(&m).unwrap() - r.log_z;
        assert!((gap - 2f64.ln()).abs() < 0.02, "gap {gap}");
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let m = PairwiseModel::from_binary(&[0.1, 0.2, -0.3], &[(0, 1, -4.0), (1, 2, -4.0), (0, 2, -4.0)]).unwrap();
        let cfg = MfConfig {
            seed: 11,
            ..MfConfig::default()
        };
        let a = mf_optimize(&m, &cfg).unwrap();
        let b = mf_optimize(&m, &cfg).unwrap();
        assert_eq!(a.log_z.to_bits(), b.log_z.to_bits());
        assert_eq!(a.marginals, b.marginals);
    }

    #[test]
    fn converged_point_is_a_fixed_point() {
        let m = PairwiseModel::from_binary(&[0.5, -0.2], &[(0, 1, 1.3)]).unwrap();
        let cfg = MfConfig::default();
        let r = mf_optimize(&m, &cfg).unwrap();
        let Marginals::Factorized(q) = r.marginals else { unreachable!() };
        let again = mf_update(&m, &q, 0).unwrap();
        let d = (again.get(0)[0] - q.get(0)[0]).abs();
        assert!(d <= cfg.tol, "moved by {d}");
    }

    #[test]
    fn invalid_config_rejected() {
        let m = single(vec![0.0, 0.0]);
        let cfg = MfConfig {
            restarts: 0,
            ..MfConfig::default()
        };
        assert!(mf_optimize(&m, &cfg).is_err());
    }
}
