//! Tree-reweighted upper bound: spanning-tree edge appearance probabilities
//! and reweighted message passing on `θ·μ + Σ_i H(μ_i) - Σ_ij ρ_ij I_ij`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bethe::{best_of_restarts, reweighted_free_energy, BpConfig, PseudoMarginals};
use crate::error::{Error, Result};
use crate::model::PairwiseModel;
use crate::result::{Bound, InferenceResult, Marginals, Method};

/// Component size above which the dense effective-resistance solve is refused.
pub const EXACT_WEIGHTS_LIMIT: usize = 2000;
/// Models up to this size default to exact weights; larger ones are sampled.
pub const EXACT_BY_DEFAULT: usize = 200;
pub const DEFAULT_TREES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub enum WeightSource {
    Sampled { trees: usize, seed: u64 },
    Exact,
    /// `(n_c - 1) / m_c` on every edge of component `c`.
    Uniform,
    Given,
}

/// Per-edge appearance probability under a spanning-tree distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeAppearance {
    pub rho: Vec<f64>,
    pub source: WeightSource,
}

impl EdgeAppearance {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if let Some(r) = rho.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::input(format!("edge appearance probability {r} outside (0, 1]")));
        }
        Ok(Self {
            rho,
            source: WeightSource::Given,
        })
    }

    /// Every edge weighted 1, which reduces TRW to Bethe.
    pub fn ones(model: &PairwiseModel) -> Self {
        Self {
            rho: vec![1.0; model.num_edges()],
            source: WeightSource::Given,
        }
    }

    pub fn total(&self) -> f64 {
        self.rho.iter().sum()
    }

    fn check(&self, model: &PairwiseModel) -> Result<()> {
        if self.rho.len() != model.num_edges() {
            return Err(Error::input(format!(
                "{} edge weights for {} edges",
                self.rho.len(),
                model.num_edges()
            )));
        }
        Ok(())
    }

    /// Weights of `parent` carried to the edges of `child`, matched by the
    /// original variable names. Surviving weights are not renormalized.
    pub fn restrict(&self, parent: &PairwiseModel, child: &PairwiseModel) -> Result<Self> {
        self.check(parent)?;
        let names = child.names();
        let rho = child
            .edges()
            .iter()
            .map(|e| {
                let pi = parent.position_of(names[e.i]);
                let pj = parent.position_of(names[e.j]);
                match (pi, pj) {
                    (Some(a), Some(b)) => parent
                        .edge_between(a, b)
                        .map(|pe| self.rho[pe])
                        .ok_or_else(|| Error::input("child edge missing from parent")),
                    _ => Err(Error::input("child variable missing from parent")),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rho,
            source: self.source.clone(),
        })
    }
}

fn component_edges(model: &PairwiseModel, comp: &[usize]) -> Vec<usize> {
    let mut edges: Vec<usize> = comp
        .iter()
        .flat_map(|&u| model.neighbors(u).iter().filter(move |&&(v, _)| v > u).map(|&(_, e)| e))
        .collect();
    edges.sort_unstable();
    edges
}

/// Edge probabilities of the uniform spanning tree, from effective resistances
/// `R_uv = (e_u - e_v)ᵀ L⁺ (e_u - e_v)` computed per connected component.
pub fn exact_tree_weights(model: &PairwiseModel) -> Result<EdgeAppearance> {
    let mut rho = vec![1.0; model.num_edges()];
    for comp in model.components() {
        let n = comp.len();
        if n < 3 {
            continue;
        }
        if n > EXACT_WEIGHTS_LIMIT {
            return Err(Error::Capacity(format!(
                "component of {n} variables exceeds the exact tree-weight limit {EXACT_WEIGHTS_LIMIT}"
            )));
        }
        let edges = component_edges(model, &comp);
        if edges.len() == n - 1 {
            continue;
        }
        let mut local = vec![usize::MAX; model.n()];
        for (k, &v) in comp.iter().enumerate() {
            local[v] = k;
        }
        // (L + J/n)⁻¹ differs from L⁺ by J/n, which cancels in R_uv
        let mut lap = DMatrix::from_element(n, n, 1.0 / n as f64);
        for &e in &edges {
            let edge = model.edge(e);
            let (a, b) = (local[edge.i], local[edge.j]);
            lap[(a, a)] += 1.0;
            lap[(b, b)] += 1.0;
            lap[(a, b)] -= 1.0;
            lap[(b, a)] -= 1.0;
        }
        let inv = lap
            .cholesky()
            .ok_or_else(|| Error::input("graph Laplacian is not positive definite on a component"))?
            .inverse();
        for &e in &edges {
            let edge = model.edge(e);
            let (a, b) = (local[edge.i], local[edge.j]);
            let r = inv[(a, a)] + inv[(b, b)] - 2.0 * inv[(a, b)];
            rho[e] = r.clamp(f64::MIN_POSITIVE, 1.0);
        }
    }
    Ok(EdgeAppearance {
        rho,
        source: WeightSource::Exact,
    })
}

/// Frequencies of each edge among `trees` uniform spanning trees drawn with
/// Wilson's loop-erased random walk, floored at `1 / (2 trees)`.
pub fn sample_tree_weights(model: &PairwiseModel, trees: usize, seed: u64) -> Result<EdgeAppearance> {
    if trees == 0 {
        return Err(Error::input("at least one tree must be sampled"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; model.num_edges()];
    let comps = model.components();
    let mut in_tree = vec![false; model.n()];
    let mut next: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); model.n()];
    for _ in 0..trees {
        for comp in &comps {
            for &v in comp {
                in_tree[v] = false;
            }
            in_tree[comp[0]] = true;
            for &start in &comp[1..] {
                let mut u = start;
                while !in_tree[u] {
                    let nb = model.neighbors(u);
                    let step = nb[rng.gen_range(0..nb.len())];
                    next[u] = step;
                    u = step.0;
                }
                let mut u = start;
                while !in_tree[u] {
                    in_tree[u] = true;
                    counts[next[u].1] += 1;
                    u = next[u].0;
                }
            }
        }
    }
    let floor = 1.0 / (2.0 * trees as f64);
    let rho = counts.iter().map(|&c| (c as f64 / trees as f64).max(floor)).collect();
    Ok(EdgeAppearance {
        rho,
        source: WeightSource::Sampled { trees, seed },
    })
}

/// `(n_c - 1) / m_c` on each component: the appearance probability of an
/// edge-symmetric graph.
pub fn uniform_tree_weights(model: &PairwiseModel) -> EdgeAppearance {
    let mut rho = vec![1.0; model.num_edges()];
    for comp in model.components() {
        let edges = component_edges(model, &comp);
        if edges.is_empty() {
            continue;
        }
        let r = ((comp.len() - 1) as f64 / edges.len() as f64).min(1.0);
        edges.iter().for_each(|&e| rho[e] = r);
    }
    EdgeAppearance {
        rho,
        source: WeightSource::Uniform,
    }
}

/// Exact weights for models up to [`EXACT_BY_DEFAULT`] variables, sampled
/// otherwise.
pub fn default_tree_weights(model: &PairwiseModel, seed: u64) -> Result<EdgeAppearance> {
    if model.n() <= EXACT_BY_DEFAULT {
        exact_tree_weights(model)
    } else {
        sample_tree_weights(model, DEFAULT_TREES, seed)
    }
}

pub fn trw_free_energy(model: &PairwiseModel, mu: &PseudoMarginals, rho: &EdgeAppearance) -> Result<f64> {
    rho.check(model)?;
    mu.check(model)?;
    Ok(reweighted_free_energy(model, mu, &rho.rho))
}

pub fn trw_optimize(model: &PairwiseModel, rho: &EdgeAppearance, cfg: &BpConfig) -> Result<InferenceResult> {
    rho.check(model)?;
    let start = Instant::now();
    let (run, value) = best_of_restarts(model, &rho.rho, cfg)?;
    Ok(InferenceResult {
        log_z: value,
        marginals: Marginals::Pseudo(run.marginals),
        method: Method::Trw,
        bound: Bound::Upper,
        converged: run.converged,
        iters: run.iters,
        wall_time: start.elapsed().as_secs_f64(),
        messages: Some(run.messages),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bethe::bethe_free_energy;
    use crate::exact::brute_logz;
    use crate::meanfield::FactorizedMarginals;

    fn graph(n: usize, edges: &[(usize, usize)], w: f64) -> PairwiseModel {
        let e: Vec<_> = edges.iter().map(|&(i, j)| (i, j, w)).collect();
        PairwiseModel::from_binary(&vec![0.0; n], &e).unwrap()
    }

    fn cycle(n: usize, w: f64) -> PairwiseModel {
        let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        graph(n, &e, w)
    }

    fn complete(n: usize, w: f64) -> PairwiseModel {
        let e: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        graph(n, &e, w)
    }

    fn within_binomial(est: f64, p: f64, trees: usize) -> bool {
        let sd = (p * (1.0 - p) / trees as f64).sqrt();
        (est - p).abs() <= 3.0 * sd + 1e-12
    }

    #[test]
    fn exact_weights_on_cycles_trees_and_k4() {
        for n in 3..9 {
            let r = exact_tree_weights(&cycle(n, 1.0)).unwrap();
            for &x in &r.rho {
                assert!((x - (n - 1) as f64 / n as f64).abs() < 1e-9);
            }
            assert!((r.total() - (n - 1) as f64).abs() < 1e-9);
        }
        let t = graph(5, &[(0, 1), (1, 2), (1, 3), (3, 4)], 1.0);
        assert!(exact_tree_weights(&t).unwrap().rho.iter().all(|&x| x == 1.0));
        let k4 = exact_tree_weights(&complete(4, 1.0)).unwrap();
        assert!(k4.rho.iter().all(|&x| (x - 0.5).abs() < 1e-9));
    }

    #[test]
    fn exact_weights_per_component() {
        // triangle plus a disjoint square plus an isolated vertex
        let m = graph(8, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (5, 6), (3, 6)], 1.0);
        let r = exact_tree_weights(&m).unwrap();
        assert!((r.total() - (8 - 3) as f64).abs() < 1e-9);
    }

    #[test]
    fn sampled_weights_within_binomial_bands() {
        let trees = 1000;
        let c5 = sample_tree_weights(&cycle(5, 1.0), trees, 3).unwrap();
        assert!(c5.rho.iter().all(|&x| within_binomial(x, 0.8, trees)));
        assert!((c5.total() - 4.0).abs() < 1e-12);
        let k4 = sample_tree_weights(&complete(4, 1.0), trees, 4).unwrap();
        assert!(k4.rho.iter().all(|&x| within_binomial(x, 0.5, trees)));
        let t = graph(4, &[(0, 1), (1, 2), (1, 3)], 1.0);
        assert!(sample_tree_weights(&t, 10, 0).unwrap().rho.iter().all(|&x| x == 1.0));
        assert_eq!(
            sample_tree_weights(&cycle(6, 1.0), 50, 9).unwrap(),
            sample_tree_weights(&cycle(6, 1.0), 50, 9).unwrap()
        );
    }

    #[test]
    fn unit_weights_match_bethe_and_independence_matches_mean_field() {
        let m = PairwiseModel::from_binary(&[0.1, 0.2, -0.3], &[(0, 1, 2.0), (1, 2, -1.0), (0, 2, 0.5)]).unwrap();
        let cfg = BpConfig::default();
        let mu = match crate::bethe::bethe_optimize(&m, &cfg).unwrap().marginals {
            Marginals::Pseudo(mu) => mu,
            _ => unreachable!(),
        };
        let a = trw_free_energy(&m, &mu, &EdgeAppearance::ones(&m)).unwrap();
        assert!((a - bethe_free_energy(&m, &mu).unwrap()).abs() < 1e-12);

        let q = FactorizedMarginals::new(vec![vec![0.2, 0.8], vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let ind = PseudoMarginals::independent(&m, &q).unwrap();
        let rho = exact_tree_weights(&m).unwrap();
        let b = trw_free_energy(&m, &ind, &rho).unwrap();
        assert!((b - crate::meanfield::mf_free_energy(&m, &q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn triangle_uniform_hand_value() {
        let m = cycle(3, 4.0);
        let rho = EdgeAppearance::new(vec![2.0 / 3.0; 3]).unwrap();
        let v = trw_free_energy(&m, &PseudoMarginals::uniform(&m), &rho).unwrap();
        assert!((v - (3.0 + 3.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn exact_on_trees() {
        let m = PairwiseModel::from_binary(&[0.3, -1.0, 0.5, 2.0], &[(0, 1, 2.5), (1, 2, -3.0), (1, 3, 5.0)]).unwrap();
        let res = trw_optimize(&m, &EdgeAppearance::ones(&m), &BpConfig::trw()).unwrap();
        assert!(res.converged);
        assert!((res.log_z - brute_logz(&m).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn strong_complete_graph_is_nearly_exact() {
        let m = complete(5, 12.0);
        let rho = exact_tree_weights(&m).unwrap();
        let res = trw_optimize(&m, &rho, &BpConfig::trw()).unwrap();
        let a = brute_logz(&m).unwrap();
        assert!(res.log_z >= a - 1e-6);
        assert!(res.log_z - a <= 0.05, "gap {}", res.log_z - a);
    }

    #[test]
    fn upper_bounds_frustrated_triangle() {
        let m = cycle(3, -8.0);
        let rho = exact_tree_weights(&m).unwrap();
        let res = trw_optimize(&m, &rho, &BpConfig::trw()).unwrap();
        assert!(res.converged);
        assert_eq!(res.bound, Bound::Upper);
        assert!(res.log_z >= brute_logz(&m).unwrap() - 1e-6);
    }

    #[test]
    fn restriction_keeps_parent_weights() {
        let m = complete(4, 1.0);
        let rho = exact_tree_weights(&m).unwrap();
        let (child, _) = m.clamp(1, 0).unwrap();
        let r = rho.restrict(&m, &child).unwrap();
        assert_eq!(r.rho.len(), 3);
        assert!(r.rho.iter().all(|&x| (x - 0.5).abs() < 1e-9));
        assert!(EdgeAppearance::new(vec![0.0]).is_err());
    }
}
