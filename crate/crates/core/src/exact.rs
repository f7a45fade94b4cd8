//! Exact log-partition functions: enumeration and variable elimination.

use crate::error::{Error, Result};
use crate::logspace::{log_sum_exp, LogSumExp};
use crate::model::PairwiseModel;

/// Largest joint state space [`brute_logz`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 25;
/// Largest intermediate table [`eliminate_logz`] will allocate.
pub const ELIMINATION_LIMIT: usize = 1 << 26;

/// `log Σ_x exp(-E(x))` by enumerating every configuration.
pub fn brute_logz(model: &PairwiseModel) -> Result<f64> {
    let size = model.state_space().filter(|&s| s <= BRUTE_FORCE_LIMIT).ok_or_else(|| {
        Error::Capacity(format!(
            "state space of {} variables exceeds the enumeration limit of {BRUTE_FORCE_LIMIT}",
            model.n()
        ))
    })?;
    let n = model.n();
    let mut config = vec![0usize; n];
    let mut acc = LogSumExp::default();
    for _ in 0..size {
        acc.push(-model.energy_unchecked(&config));
        for (v, x) in config.iter_mut().enumerate() {
            *x += 1;
            if *x < model.num_labels(v) {
                break;
            }
            *x = 0;
        }
    }
    Ok(acc.value())
}

/// A variable elimination order together with its induced width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EliminationOrder {
    pub order: Vec<usize>,
    /// Largest intermediate scope size minus one (0 for edgeless models).
    pub induced_width: usize,
    /// Largest intermediate table, in entries.
    pub max_table: u128,
}

impl EliminationOrder {
    /// Validates `order` as a permutation and computes its width.
    pub fn from_order(model: &PairwiseModel, order: Vec<usize>) -> Result<Self> {
        let n = model.n();
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
            return Err(Error::input("elimination order must be a permutation of the variables"));
        }
        let mut adj = adjacency_sets(model);
        let mut width = 0;
        let mut max_table = 1u128;
        for &v in &order {
            let nbrs: Vec<usize> = adj[v].iter().copied().collect();
            width = width.max(nbrs.len());
            let table = nbrs
                .iter()
                .fold(model.num_labels(v) as u128, |acc, &u| acc.saturating_mul(model.num_labels(u) as u128));
            max_table = max_table.max(table);
            eliminate_vertex(&mut adj, v);
        }
        Ok(Self {
            order,
            induced_width: width,
            max_table,
        })
    }

    /// Greedy min-fill order; ties go to the lowest variable index.
    pub fn min_fill(model: &PairwiseModel) -> Self {
        let n = model.n();
        let mut adj = adjacency_sets(model);
        let mut alive = vec![true; n];
        let mut order = Vec::with_capacity(n);
        for _ in 0..n {
            let mut best = (usize::MAX, usize::MAX);
            for v in (0..n).filter(|&v| alive[v]) {
                let nb: Vec<usize> = adj[v].iter().copied().collect();
                let mut fill = 0;
                for a in 0..nb.len() {
                    for b in a + 1..nb.len() {
                        if !adj[nb[a]].contains(&nb[b]) {
                            fill += 1;
                        }
                    }
                }
                if fill < best.0 {
                    best = (fill, v);
                }
            }
            let v = best.1;
            alive[v] = false;
            order.push(v);
            eliminate_vertex(&mut adj, v);
        }
        Self::from_order(model, order).expect("min-fill yields a permutation")
    }
}

fn adjacency_sets(model: &PairwiseModel) -> Vec<std::collections::BTreeSet<usize>> {
    (0..model.n())
        .map(|v| model.neighbors(v).iter().map(|&(u, _)| u).collect())
        .collect()
}

fn eliminate_vertex(adj: &mut [std::collections::BTreeSet<usize>], v: usize) {
    let nb: Vec<usize> = adj[v].iter().copied().collect();
    for &a in &nb {
        adj[a].remove(&v);
        for &b in &nb {
            if a != b {
                adj[a].insert(b);
            }
        }
    }
    adj[v].clear();
}

/// Log-space table over a sorted scope, row-major with the last variable fastest.
#[derive(Clone, Debug)]
struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for k in (0..self.vars.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.cards[k + 1];
        }
        s
    }
}

/// `log Z` by variable elimination in log space.
///
/// Uses the min-fill order when `order` is `None`. Fails with a capacity error
/// when some intermediate table would exceed [`ELIMINATION_LIMIT`] entries.
pub fn eliminate_logz(model: &PairwiseModel, order: Option<&EliminationOrder>) -> Result<f64> {
    let owned;
    let order = match order {
        Some(o) => {
            if o.order.len() != model.n() {
                return Err(Error::input("elimination order does not match the model"));
            }
            o
        }
        None => {
            owned = EliminationOrder::min_fill(model);
            &owned
        }
    };
    if order.max_table > ELIMINATION_LIMIT as u128 {
        return Err(Error::Capacity(format!(
            "elimination needs a table of {} entries (induced width {}), limit is {ELIMINATION_LIMIT}",
            order.max_table, order.induced_width
        )));
    }

    let mut factors: Vec<Option<Factor>> = Vec::with_capacity(model.n() + model.num_edges());
    for i in 0..model.n() {
        factors.push(Some(Factor {
            vars: vec![i],
            cards: vec![model.num_labels(i)],
            values: model.unary(i).to_vec(),
        }));
    }
    for e in model.edges() {
        let (r, c) = e.shape();
        factors.push(Some(Factor {
            vars: vec![e.i, e.j],
            cards: vec![r, c],
            values: e.table().to_vec(),
        }));
    }

    let mut constant = 0.0;
    for &v in &order.order {
        let bucket: Vec<Factor> = factors
            .iter_mut()
            .filter(|f| f.as_ref().is_some_and(|f| f.vars.contains(&v)))
            .map(|f| f.take().expect("filtered on Some"))
            .collect();
        let out = sum_out(model, &bucket, v);
        if out.vars.is_empty() {
            constant += out.values[0];
        } else {
            factors.push(Some(out));
        }
    }
    // every scope eventually empties; leftovers only arise for empty buckets
    for f in factors.into_iter().flatten() {
        constant += log_sum_exp(&f.values);
    }
    Ok(constant)
}

/// Multiplies `bucket` (log-add) and sums `v` out.
fn sum_out(model: &PairwiseModel, bucket: &[Factor], v: usize) -> Factor {
    let lv = model.num_labels(v);
    if bucket.is_empty() {
        return Factor {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![(lv as f64).ln()],
        };
    }
    let mut scope: Vec<usize> = bucket.iter().flat_map(|f| f.vars.iter().copied()).filter(|&u| u != v).collect();
    scope.sort_unstable();
    scope.dedup();
    let cards: Vec<usize> = scope.iter().map(|&u| model.num_labels(u)).collect();
    let size: usize = cards.iter().product();

    // per factor: stride for each output position, and stride for v
    let plan: Vec<(Vec<usize>, usize)> = bucket
        .iter()
        .map(|f| {
            let s = f.strides();
            let per_out = scope
                .iter()
                .map(|u| f.vars.iter().position(|w| w == u).map_or(0, |k| s[k]))
                .collect();
            let sv = f.vars.iter().position(|&w| w == v).map_or(0, |k| s[k]);
            (per_out, sv)
        })
        .collect();

    let mut values = vec![0.0; size];
    let mut assign = vec![0usize; scope.len()];
    let mut base = vec![0usize; bucket.len()];
    let mut terms = vec![0.0; lv];
    for out in values.iter_mut() {
        for (x, t) in terms.iter_mut().enumerate() {
            *t = bucket
                .iter()
                .zip(&plan)
                .zip(&base)
                .map(|((f, (_, sv)), &b)| f.values[b + x * sv])
                .sum();
        }
        *out = log_sum_exp(&terms);
        // odometer, last position fastest
        for k in (0..scope.len()).rev() {
            assign[k] += 1;
            for (b, (per_out, _)) in base.iter_mut().zip(&plan) {
                *b += per_out[k];
            }
            if assign[k] < cards[k] {
                break;
            }
            for (b, (per_out, _)) in base.iter_mut().zip(&plan) {
                *b -= per_out[k] * cards[k];
            }
            assign[k] = 0;
        }
    }
    Factor {
        vars: scope,
        cards,
        values,
    }
}

/// Exact `log Z`: enumeration for small state spaces, elimination otherwise.
pub fn exact_logz(model: &PairwiseModel) -> Result<f64> {
    match model.state_space() {
        Some(s) if s <= 1 << 12 => brute_logz(model),
        _ => eliminate_logz(model, None),
    }
}

/// `p(x_var) = Z(x_var) / Z`, each sub-partition function obtained by clamping.
pub fn exact_marginal(model: &PairwiseModel, var: usize) -> Result<Vec<f64>> {
    if var >= model.n() {
        return Err(Error::input(format!("variable {var} out of range (n = {})", model.n())));
    }
    let logz = exact_logz(model)?;
    (0..model.num_labels(var))
        .map(|x| {
            let (child, map) = model.clamp(var, x)?;
            Ok((exact_logz(&child)? + map.log_offset - logz).exp())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;

    #[test]
    fn brute_hand_values() {
        let one = PairwiseModel::from_binary(&[0.0], &[]).unwrap();
        assert!((brute_logz(&one).unwrap() - 2f64.ln()).abs() < 1e-15);
        let two = PairwiseModel::from_binary(&[0.0, 0.0], &[(0, 1, 2.0)]).unwrap();
        let expect = (2.0 * 1f64.exp() + 2.0).ln();
        assert!((brute_logz(&two).unwrap() - expect).abs() < 1e-14);
        assert_eq!(brute_logz(&PairwiseModel::empty()).unwrap(), 0.0);
    }

    #[test]
    fn brute_refuses_huge_models() {
        let m = ModelBuilder::binary(26).build().unwrap();
        assert!(matches!(brute_logz(&m), Err(Error::Capacity(_))));
    }

    #[test]
    fn elimination_on_empty_model() {
        assert_eq!(eliminate_logz(&PairwiseModel::empty(), None).unwrap(), 0.0);
    }

    #[test]
    fn chain_matches_closed_form() {
        // Z = 2 (1 + e^{W/2})^{n-1} for a uniform chain without fields
        let n = 50;
        let w = 1.7;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, w)).collect();
        let m = PairwiseModel::from_binary(&vec![0.0; n], &edges).unwrap();
        let expect = 2f64.ln() + (n - 1) as f64 * (1.0 + (w / 2.0).exp()).ln();
        assert!((eliminate_logz(&m, None).unwrap() - expect).abs() < 1e-9);
        assert_eq!(EliminationOrder::min_fill(&m).induced_width, 1);
    }

    #[test]
    fn explicit_order_is_validated() {
        let m = PairwiseModel::from_binary(&[0.0; 3], &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(EliminationOrder::from_order(&m, vec![0, 0, 1]).is_err());
        let o = EliminationOrder::from_order(&m, vec![1, 0, 2]).unwrap();
        assert_eq!(o.induced_width, 2);
        let a = eliminate_logz(&m, Some(&o)).unwrap();
        assert!((a - brute_logz(&m).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn toroidal_grid_is_tractable() {
        let (r, c) = (9, 9);
        let mut edges = Vec::new();
        for i in 0..r {
            for j in 0..c {
                let v = i * c + j;
                edges.push((v, i * c + (j + 1) % c, 0.3));
                edges.push((v, ((i + 1) % r) * c + j, -0.2));
            }
        }
        let m = PairwiseModel::from_binary(&vec![0.1; r * c], &edges).unwrap();
        let order = EliminationOrder::min_fill(&m);
        assert!(order.induced_width <= 25, "width {}", order.induced_width);
        assert!(eliminate_logz(&m, Some(&order)).unwrap().is_finite());
    }

    #[test]
    fn marginals_of_isolated_variables() {
        let m = PairwiseModel::from_binary(&[0.0], &[]).unwrap();
        let p = exact_marginal(&m, 0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let m = PairwiseModel::from_binary(&[1.0], &[]).unwrap();
        let p = exact_marginal(&m, 0).unwrap();
        let e = 1f64.exp();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_triangle_marginals_are_uniform() {
        let m = PairwiseModel::from_binary(&[0.0; 3], &[(0, 1, 4.0), (1, 2, 4.0), (0, 2, 4.0)]).unwrap();
        for v in 0..3 {
            let p = exact_marginal(&m, v).unwrap();
            assert!((p[0] - 0.5).abs() < 1e-12);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
