//! Bethe approximation: loopy belief propagation and the Bethe free energy
//! `θ·μ + Σ_i H(μ_i) - Σ_ij I_ij(μ_ij)` over the local polytope.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::logspace::entropy;
use crate::meanfield::FactorizedMarginals;
use crate::model::PairwiseModel;
use crate::passing::{self, Messages, PassingConfig, Schedule};
use crate::result::{Bound, InferenceResult, Marginals, Method};

/// Largest marginalization mismatch accepted by the free-energy functions.
pub const POLYTOPE_TOL: f64 = 1e-6;

/// Singleton tables plus one row-major `L_i × L_j` table per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoMarginals {
    singles: Vec<Vec<f64>>,
    pairs: Vec<Vec<f64>>,
}

impl PseudoMarginals {
    /// Validated construction: shapes, normalization and local consistency,
    /// all within `1e-8`.
    pub fn new(model: &PairwiseModel, singles: Vec<Vec<f64>>, pairs: Vec<Vec<f64>>) -> Result<Self> {
        let mu = Self { singles, pairs };
        mu.check_shape(model)?;
        for (what, t) in mu
            .singles
            .iter()
            .map(|t| ("singleton", t))
            .chain(mu.pairs.iter().map(|t| ("pairwise", t)))
        {
            if t.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::input(format!("{what} table has a negative or non-finite entry")));
            }
            let s: f64 = t.iter().sum();
            if (s - 1.0).abs() > 1e-8 {
                return Err(Error::input(format!("{what} table sums to {s}")));
            }
        }
        let v = mu.polytope_violation(model);
        if v > 1e-8 {
            return Err(Error::input(format!("pseudomarginals violate local consistency by {v:e}")));
        }
        Ok(mu)
    }

    pub(crate) fn from_parts_unchecked(singles: Vec<Vec<f64>>, pairs: Vec<Vec<f64>>) -> Self {
        Self { singles, pairs }
    }

    /// `μ_ij = μ_i μ_j` on every edge.
    pub fn independent(model: &PairwiseModel, q: &FactorizedMarginals) -> Result<Self> {
        let singles = q.as_slices().to_vec();
        if singles.len() != model.n() || singles.iter().zip(model.labels()).any(|(s, &l)| s.len() != l) {
            return Err(Error::input("marginals do not match the model"));
        }
        let pairs = model
            .edges()
            .iter()
            .map(|e| {
                let (a, b) = (&singles[e.i], &singles[e.j]);
                a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
            })
            .collect();
        Ok(Self { singles, pairs })
    }

    pub fn uniform(model: &PairwiseModel) -> Self {
        Self::independent(model, &FactorizedMarginals::uniform(model)).expect("shapes match")
    }

    pub fn singleton(&self, var: usize) -> &[f64] {
        &self.singles[var]
    }

    /// Row-major table of edge `e`.
    pub fn pair(&self, e: usize) -> &[f64] {
        &self.pairs[e]
    }

    pub fn singles(&self) -> &[Vec<f64>] {
        &self.singles
    }

    /// Largest absolute gap between a pair table's row/column sums and the
    /// corresponding singleton tables.
    pub fn polytope_violation(&self, model: &PairwiseModel) -> f64 {
        let mut worst: f64 = 0.0;
        for (e, edge) in model.edges().iter().enumerate() {
            let (rows, cols) = edge.shape();
            let t = &self.pairs[e];
            for a in 0..rows {
                let s: f64 = t[a * cols..(a + 1) * cols].iter().sum();
                worst = worst.max((s - self.singles[edge.i][a]).abs());
            }
            for b in 0..cols {
                let s: f64 = (0..rows).map(|a| t[a * cols + b]).sum();
                worst = worst.max((s - self.singles[edge.j][b]).abs());
            }
        }
        worst
    }

    fn check_shape(&self, model: &PairwiseModel) -> Result<()> {
        let ok = self.singles.len() == model.n()
            && self.pairs.len() == model.num_edges()
            && self.singles.iter().zip(model.labels()).all(|(s, &l)| s.len() == l)
            && self.pairs.iter().zip(model.edges()).all(|(p, e)| {
                let (r, c) = e.shape();
                p.len() == r * c
            });
        if ok {
            Ok(())
        } else {
            Err(Error::input("pseudomarginals do not match the model"))
        }
    }

    pub(crate) fn check(&self, model: &PairwiseModel) -> Result<()> {
        self.check_shape(model)?;
        let v = self.polytope_violation(model);
        if v > POLYTOPE_TOL {
            return Err(Error::input(format!("pseudomarginals violate local consistency by {v:e}")));
        }
        Ok(())
    }
}

/// `θ·μ + Σ H(μ_i) - Σ ρ_e I_e`. Mutual information is taken from each pair
/// table and its own margins so that it stays nonnegative off the polytope.
pub(crate) fn reweighted_free_energy(model: &PairwiseModel, mu: &PseudoMarginals, rho: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..model.n() {
        let s = &mu.singles[i];
        total += model.unary(i).iter().zip(s).map(|(t, p)| t * p).sum::<f64>();
        total += entropy(s);
    }
    for (e, edge) in model.edges().iter().enumerate() {
        let t = &mu.pairs[e];
        total += edge.table().iter().zip(t).map(|(th, p)| th * p).sum::<f64>();
        let (rows, cols) = edge.shape();
        let row: Vec<f64> = (0..rows).map(|a| t[a * cols..(a + 1) * cols].iter().sum()).collect();
        let col: Vec<f64> = (0..cols).map(|b| (0..rows).map(|a| t[a * cols + b]).sum()).collect();
        let mi = (entropy(&row) + entropy(&col) - entropy(t)).max(0.0);
        total -= rho[e] * mi;
    }
    total
}

pub fn bethe_free_energy(model: &PairwiseModel, mu: &PseudoMarginals) -> Result<f64> {
    mu.check(model)?;
    Ok(reweighted_free_energy(model, mu, &vec![1.0; model.num_edges()]))
}

#[derive(Clone, Debug, PartialEq)]
pub enum MessageInit {
    Uniform,
    Random,
    Warm(Messages),
}

#[derive(Clone, Debug)]
pub struct BpConfig {
    /// Weight kept on the previous message, in `[0, 1)`.
    pub damping: f64,
    /// Bound on the largest undamped change of any log-message in a sweep.
    pub tol: f64,
    pub max_iters: usize,
    pub schedule: Schedule,
    pub restarts: usize,
    pub seed: u64,
    pub init: MessageInit,
    /// When a run stalls, it is resumed this many times with damping moved
    /// halfway towards 1.
    pub damping_retries: usize,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-9,
            max_iters: 10_000,
            schedule: Schedule::SequentialFixed,
            restarts: 5,
            seed: 0,
            init: MessageInit::Uniform,
            damping_retries: 2,
        }
    }
}

impl BpConfig {
    /// Defaults for tree-reweighted passing: lighter damping, one uniform start.
    pub fn trw() -> Self {
        Self {
            damping: 0.25,
            restarts: 1,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::input(format!("damping {} outside [0, 1)", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::input("tolerance must be positive"));
        }
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::input("max_iters and restarts must be at least 1"));
        }
        Ok(())
    }

    fn passing(&self, damping: f64) -> PassingConfig {
        PassingConfig {
            damping,
            tol: self.tol,
            max_iters: self.max_iters,
            schedule: self.schedule,
        }
    }
}

/// Outcome of one message-passing run.
#[derive(Clone, Debug)]
pub struct BpRun {
    pub marginals: PseudoMarginals,
    pub messages: Messages,
    pub converged: bool,
    pub iters: usize,
}

pub(crate) fn run_with(
    model: &PairwiseModel,
    rho: &[f64],
    init: Messages,
    cfg: &BpConfig,
    rng: &mut ChaCha8Rng,
) -> BpRun {
    let mut damping = cfg.damping;
    let mut run = passing::run(model, rho, init, &cfg.passing(damping), rng);
    let mut iters = run.iters;
    for _ in 0..cfg.damping_retries {
        if run.converged {
            break;
        }
        damping = 0.5 * (1.0 + damping);
        run = passing::run(model, rho, run.messages, &cfg.passing(damping), rng);
        iters += run.iters;
    }
    BpRun {
        marginals: passing::beliefs(model, rho, &run.messages),
        messages: run.messages,
        converged: run.converged,
        iters,
    }
}

pub(crate) fn initial_messages(
    model: &PairwiseModel,
    init: &MessageInit,
    rng: &mut ChaCha8Rng,
) -> Result<Messages> {
    Ok(match init {
        MessageInit::Uniform => Messages::uniform(model),
        MessageInit::Random => Messages::random(model, rng),
        MessageInit::Warm(m) => {
            if !m.matches(model) {
                return Err(Error::input("warm-start messages do not match the model"));
            }
            m.clone()
        }
    })
}

/// Single loopy BP run from `cfg.init`.
pub fn bp_run(model: &PairwiseModel, cfg: &BpConfig) -> Result<BpRun> {
    cfg.validate()?;
    let mut rng = passing::rng_for(cfg.seed);
    let init = initial_messages(model, &cfg.init, &mut rng)?;
    Ok(run_with(model, &vec![1.0; model.num_edges()], init, cfg, &mut rng))
}

/// Best run over restarts: the first starts from `cfg.init`, the rest from
/// random messages. Converged runs take precedence over stalled ones.
pub(crate) fn best_of_restarts(
    model: &PairwiseModel,
    rho: &[f64],
    cfg: &BpConfig,
) -> Result<(BpRun, f64)> {
    cfg.validate()?;
    let mut rng = passing::rng_for(cfg.seed);
    let mut best: Option<(BpRun, f64)> = None;
    for r in 0..cfg.restarts {
        let init = if r == 0 {
            initial_messages(model, &cfg.init, &mut rng)?
        } else {
            Messages::random(model, &mut rng)
        };
        let run = run_with(model, rho, init, cfg, &mut rng);
        let value = reweighted_free_energy(model, &run.marginals, rho);
        let better = match &best {
            None => true,
            Some((b, v)) => (run.converged && !b.converged) || (run.converged == b.converged && value > *v),
        };
        if better {
            best = Some((run, value));
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn bethe_optimize(model: &PairwiseModel, cfg: &BpConfig) -> Result<InferenceResult> {
    let start = Instant::now();
    let (run, value) = best_of_restarts(model, &vec![1.0; model.num_edges()], cfg)?;
    let certified = model.is_binary() && model.balance_certificate(0.0)?.is_balanced();
    Ok(InferenceResult {
        log_z: value,
        marginals: Marginals::Pseudo(run.marginals),
        method: Method::Bethe,
        bound: if certified { Bound::Lower } else { Bound::None },
        converged: run.converged,
        iters: run.iters,
        wall_time: start.elapsed().as_secs_f64(),
        messages: Some(run.messages),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{brute_logz, exact_marginal};
    use crate::meanfield::mf_free_energy;

    fn cycle(n: usize, w: f64) -> PairwiseModel {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, w)).collect();
        PairwiseModel::from_binary(&vec![0.0; n], &edges).unwrap()
    }

    fn tree() -> PairwiseModel {
        PairwiseModel::from_binary(
            &[0.3, -1.0, 0.5, 2.0, -0.7],
            &[(0, 1, 2.5), (1, 2, -3.0), (1, 3, 1.0), (3, 4, -4.0)],
        )
        .unwrap()
    }

    #[test]
    fn exact_on_trees() {
        let m = tree();
        let cfg = BpConfig {
            damping: 0.0,
            ..BpConfig::default()
        };
        let run = bp_run(&m, &cfg).unwrap();
        assert!(run.converged);
        // diameter is 3
        assert!(run.iters <= 5, "{} sweeps", run.iters);
        for v in 0..m.n() {
            let p = exact_marginal(&m, v).unwrap();
            for (a, b) in p.iter().zip(run.marginals.singleton(v)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let res = bethe_optimize(&m, &BpConfig::default()).unwrap();
        assert!((res.log_z - brute_logz(&m).unwrap()).abs() < 1e-8);
        assert_eq!(res.bound, Bound::Lower);
    }

    #[test]
    fn single_edge_pair_belief() {
        let m = PairwiseModel::from_binary(&[0.0, 0.0], &[(0, 1, 2.0)]).unwrap();
        let run = bp_run(&m, &BpConfig::default()).unwrap();
        // E = -(x0 x1 + (1-x0)(1-x1)), so agreeing states weigh e versus 1
        let z = 2.0 * std::f64::consts::E + 2.0;
        let want = [1f64.exp() / z, 1.0 / z, 1.0 / z, 1f64.exp() / z];
        for (a, b) in run.marginals.pair(0).iter().zip(want) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn balanced_repulsive_square_is_symmetric() {
        let m = cycle(4, -6.0);
        let run = bp_run(&m, &BpConfig::default()).unwrap();
        assert!(run.converged);
        for v in 0..4 {
            assert!((run.marginals.singleton(v)[0] - 0.5).abs() < 1e-9);
        }
        assert_eq!(bethe_optimize(&m, &BpConfig::default()).unwrap().bound, Bound::Lower);
    }

    #[test]
    fn independent_marginals_reduce_to_mean_field() {
        let m = PairwiseModel::from_binary(&[0.2, -0.4, 1.0], &[(0, 1, 3.0), (1, 2, -2.0), (0, 2, 1.0)]).unwrap();
        let q = FactorizedMarginals::new(vec![vec![0.3, 0.7], vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        let mu = PseudoMarginals::independent(&m, &q).unwrap();
        let a = bethe_free_energy(&m, &mu).unwrap();
        let b = mf_free_energy(&m, &q).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn triangle_at_uniform_hand_value() {
        // each pair table is diag(2, 2) with zero off-diagonal; under uniform μ
        // that contributes 1 per edge, and all mutual informations vanish
        let m = cycle(3, 4.0);
        let mu = PseudoMarginals::uniform(&m);
        let v = bethe_free_energy(&m, &mu).unwrap();
        assert!((v - (3.0 + 3.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn off_polytope_is_rejected() {
        let m = cycle(3, 1.0);
        let mut mu = PseudoMarginals::uniform(&m);
        mu.pairs[0] = vec![0.5, 0.0, 0.0, 0.5];
        mu.singles[0] = vec![0.9, 0.1];
        assert!(matches!(bethe_free_energy(&m, &mu), Err(Error::Input(_))));
        assert!(PseudoMarginals::new(&m, mu.singles.clone(), mu.pairs.clone()).is_err());
    }

    #[test]
    fn frustrated_triangle_overestimates() {
        let m = cycle(3, -8.0);
        let res = bethe_optimize(&m, &BpConfig::default()).unwrap();
        assert_eq!(res.bound, Bound::None);
        assert!(res.log_z > brute_logz(&m).unwrap());
    }

    #[test]
    fn converged_beliefs_are_a_fixed_point() {
        let m = PairwiseModel::from_binary(
            &[0.5, -0.5, 0.2, 0.0],
            &[(0, 1, 1.5), (1, 2, -2.0), (2, 3, 1.0), (3, 0, 0.7), (0, 2, -0.4)],
        )
        .unwrap();
        let cfg = BpConfig::default();
        let run = bp_run(&m, &cfg).unwrap();
        assert!(run.converged);
        assert!(run.marginals.polytope_violation(&m) < 1e-8);
        let again = bp_run(
            &m,
            &BpConfig {
                damping: 0.0,
                max_iters: 1,
                init: MessageInit::Warm(run.messages.clone()),
                ..cfg
            },
        )
        .unwrap();
        for v in 0..m.n() {
            for (a, b) in again.marginals.singleton(v).iter().zip(run.marginals.singleton(v)) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let m = cycle(3, 1.0);
        let bad = BpConfig {
            damping: 1.0,
            ..BpConfig::default()
        };
        assert!(bethe_optimize(&m, &bad).is_err());
    }
}
