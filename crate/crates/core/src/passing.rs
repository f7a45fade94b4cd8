//! Reweighted sum-product message passing.
//!
//! With every edge weight `ρ_e = 1` this is ordinary loopy BP; with spanning-tree
//! edge appearance probabilities it is tree-reweighted BP. Messages are stored
//! as normalized log-probability vectors. Damping mixes old and new messages in
//! the probability domain, evaluated with `log_add_exp` so that strong
//! potentials never underflow.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::bethe::PseudoMarginals;
use crate::logspace::{log_add_exp, log_sum_exp, softmax_in_place};
use crate::model::PairwiseModel;

/// Two log-domain messages per edge `e = (i, j)`: slot `2e` carries `i → j`
/// (a function of `x_j`) and slot `2e + 1` carries `j → i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Messages {
    log: Vec<Vec<f64>>,
}

impl Messages {
    pub fn uniform(model: &PairwiseModel) -> Self {
        let mut log = Vec::with_capacity(2 * model.num_edges());
        for e in model.edges() {
            let (li, lj) = e.shape();
            log.push(vec![-(lj as f64).ln(); lj]);
            log.push(vec![-(li as f64).ln(); li]);
        }
        Self { log }
    }

    /// Messages drawn from a symmetric Dirichlet(1).
    pub fn random(model: &PairwiseModel, rng: &mut ChaCha8Rng) -> Self {
        let mut draw = |l: usize| -> Vec<f64> {
            let v: Vec<f64> = (0..l).map(|_| Exp1.sample(rng)).collect();
            let s: f64 = v.iter().sum();
            v.iter().map(|x| (x / s).max(1e-300).ln()).collect()
        };
        let mut log = Vec::with_capacity(2 * model.num_edges());
        for e in model.edges() {
            let (li, lj) = e.shape();
            log.push(draw(lj));
            log.push(draw(li));
        }
        Self { log }
    }

    pub fn matches(&self, model: &PairwiseModel) -> bool {
        self.log.len() == 2 * model.num_edges()
            && model.edges().iter().enumerate().all(|(e, edge)| {
                let (li, lj) = edge.shape();
                self.log[2 * e].len() == lj && self.log[2 * e + 1].len() == li
            })
    }

    /// Log-message sent from `from` along edge `e`.
    pub fn get(&self, model: &PairwiseModel, e: usize, from: usize) -> &[f64] {
        &self.log[slot(model, e, from)]
    }

    /// Carries messages of `parent` over to `child` by original variable names.
    /// Edges absent from the parent start uniform.
    pub fn restrict(&self, parent: &PairwiseModel, child: &PairwiseModel) -> Messages {
        let mut out = Messages::uniform(child);
        for (ce, edge) in child.edges().iter().enumerate() {
            let pi = parent.position_of(child.names()[edge.i]);
            let pj = parent.position_of(child.names()[edge.j]);
            if let (Some(pi), Some(pj)) = (pi, pj) {
                if let Some(pe) = parent.edge_between(pi, pj) {
                    // positions preserve name order, so orientation is preserved
                    out.log[2 * ce] = self.get(parent, pe, pi).to_vec();
                    out.log[2 * ce + 1] = self.get(parent, pe, pj).to_vec();
                }
            }
        }
        out
    }
}

#[inline]
fn slot(model: &PairwiseModel, e: usize, from: usize) -> usize {
    if model.edge(e).i == from {
        2 * e
    } else {
        2 * e + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Edges in index order, `i → j` then `j → i`.
    SequentialFixed,
    /// A fresh random permutation of directed edges every pass.
    RandomSequential,
}

#[derive(Clone, Debug)]
pub(crate) struct PassingConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub schedule: Schedule,
}

pub(crate) struct PassingRun {
    pub messages: Messages,
    pub converged: bool,
    pub iters: usize,
}

/// `θ_u(x) + Σ_{k ∈ N(u)} ρ_ku log m_{k→u}(x) - log m_{v→u}(x)`, with `v` the
/// target of the outgoing message (or none, for the full belief).
fn cavity(model: &PairwiseModel, rho: &[f64], msgs: &Messages, u: usize, exclude: Option<usize>) -> Vec<f64> {
    let mut out = model.unary(u).to_vec();
    for &(k, e) in model.neighbors(u) {
        let weight = if Some(e) == exclude { rho[e] - 1.0 } else { rho[e] };
        if weight == 0.0 {
            continue;
        }
        let m = &msgs.log[slot(model, e, k)];
        out.iter_mut().zip(m).for_each(|(o, l)| *o += weight * l);
    }
    out
}

/// Recomputes the message `u → v` across edge `e`; returns the L∞ distance
/// between the old log-message and its undamped update. Log space bounds the
/// relative change, which is what belief consistency depends on, and the
/// undamped step is not shrunk by damping.
fn update(model: &PairwiseModel, rho: &[f64], msgs: &mut Messages, e: usize, u: usize, damping: f64) -> f64 {
    let edge = model.edge(e);
    let v = edge.other(u);
    let cav = cavity(model, rho, msgs, u, Some(e));
    let inv = 1.0 / rho[e];
    let lv = model.num_labels(v);
    let mut terms = vec![0.0; cav.len()];
    let mut new: Vec<f64> = (0..lv)
        .map(|xv| {
            for (xu, t) in terms.iter_mut().enumerate() {
                *t = cav[xu] + inv * edge.value_from(u, xu, xv);
            }
            log_sum_exp(&terms)
        })
        .collect();
    let norm = log_sum_exp(&new);
    new.iter_mut().for_each(|x| *x -= norm);

    let s = slot(model, e, u);
    let old = &msgs.log[s];
    let change = new
        .iter()
        .zip(old)
        .map(|(n, o)| if n == o { 0.0 } else { (n - o).abs() })
        .fold(0.0, f64::max);
    if damping > 0.0 {
        let (a, b) = ((1.0 - damping).ln(), damping.ln());
        for (n, o) in new.iter_mut().zip(old) {
            *n = log_add_exp(a + *n, b + o);
        }
        let norm = log_sum_exp(&new);
        new.iter_mut().for_each(|x| *x -= norm);
    }
    msgs.log[s] = new;
    change
}

pub(crate) fn run(
    model: &PairwiseModel,
    rho: &[f64],
    mut msgs: Messages,
    cfg: &PassingConfig,
    rng: &mut ChaCha8Rng,
) -> PassingRun {
    let mut directed: Vec<(usize, usize)> = model
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(e, edge)| [(e, edge.i), (e, edge.j)])
        .collect();
    if directed.is_empty() {
        return PassingRun {
            messages: msgs,
            converged: true,
            iters: 0,
        };
    }
    let mut iters = 0;
    let mut converged = false;
    while iters < cfg.max_iters {
        if cfg.schedule == Schedule::RandomSequential {
            directed.shuffle(rng);
        }
        let mut change: f64 = 0.0;
        for &(e, u) in &directed {
            change = change.max(update(model, rho, &mut msgs, e, u, cfg.damping));
        }
        iters += 1;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    PassingRun {
        messages: msgs,
        converged,
        iters,
    }
}

/// Singleton and pairwise beliefs implied by `msgs`.
pub(crate) fn beliefs(model: &PairwiseModel, rho: &[f64], msgs: &Messages) -> PseudoMarginals {
    let singles: Vec<Vec<f64>> = (0..model.n())
        .map(|u| {
            let mut b = cavity(model, rho, msgs, u, None);
            softmax_in_place(&mut b);
            b
        })
        .collect();
    let pairs: Vec<Vec<f64>> = model
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let ci = cavity(model, rho, msgs, edge.i, Some(e));
            let cj = cavity(model, rho, msgs, edge.j, Some(e));
            let inv = 1.0 / rho[e];
            let mut t: Vec<f64> = Vec::with_capacity(ci.len() * cj.len());
            for (a, ca) in ci.iter().enumerate() {
                for (b, cb) in cj.iter().enumerate() {
                    t.push(ca + cb + inv * edge.value(a, b));
                }
            }
            softmax_in_place(&mut t);
            fit_margins(&mut t, &singles[edge.i], &singles[edge.j]);
            t
        })
        .collect();
    PseudoMarginals::from_parts_unchecked(singles, pairs)
}

/// Sinkhorn scaling of a row-major pair table towards the given margins. At a
/// fixed point the table already matches and this is a rounding-level touch;
/// away from one it moves the beliefs onto the local polytope.
fn fit_margins(t: &mut [f64], row: &[f64], col: &[f64]) {
    let cols = col.len();
    for _ in 0..1000 {
        let mut worst: f64 = 0.0;
        for (a, &want) in row.iter().enumerate() {
            let r = &mut t[a * cols..(a + 1) * cols];
            let have: f64 = r.iter().sum();
            worst = worst.max((have - want).abs());
            if have > 0.0 {
                r.iter_mut().for_each(|x| *x *= want / have);
            }
        }
        for (b, &want) in col.iter().enumerate() {
            let have: f64 = t.iter().skip(b).step_by(cols).sum();
            worst = worst.max((have - want).abs());
            if have > 0.0 {
                t.iter_mut().skip(b).step_by(cols).for_each(|x| *x *= want / have);
            }
        }
        if worst < 1e-14 {
            break;
        }
    }
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
