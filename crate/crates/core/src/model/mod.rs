//! Discrete pairwise Markov random fields.
//!
//! A [`PairwiseModel`] holds log-scale potential tables: `θ_i(x_i)` for every
//! variable and `θ_ij(x_i, x_j)` for every edge. The distribution is
//! `p(x) ∝ exp(-E(x))` with `E(x) = -Σ θ_i(x_i) - Σ θ_ij(x_i, x_j)`.
//!
//! Binary models also have a `(θ, W)` lens, [`BinaryView`], in which
//! `E(x) = -Σ θ_i x_i - Σ (W_ij / 2) [x_i x_j + (1 - x_i)(1 - x_j)]` up to an
//! additive constant.

mod balance;
pub mod io;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use balance::Balance;

/// One pairwise factor, stored with `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    cols: usize,
    table: Vec<f64>,
}

impl Edge {
    /// `θ_ij(a, b)` with `a` the label of `i` and `b` the label of `j`.
    #[inline]
    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.table[a * self.cols + b]
    }

    /// Value seen from endpoint `node`: `x_node` is its label, `x_other` the label of
    /// the opposite endpoint.
    #[inline]
    pub fn value_from(&self, node: usize, x_node: usize, x_other: usize) -> f64 {
        if node == self.i {
            self.value(x_node, x_other)
        } else {
            self.value(x_other, x_node)
        }
    }

    pub fn other(&self, node: usize) -> usize {
        if node == self.i {
            self.j
        } else {
            self.i
        }
    }

    /// Row-major `L_i × L_j` table.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.table.len() / self.cols, self.cols)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseModel {
    labels: Vec<usize>,
    unary: Vec<Vec<f64>>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
    lookup: HashMap<(usize, usize), usize>,
    names: Vec<usize>,
}

/// Incremental constructor; validation happens in [`ModelBuilder::build`].
#[derive(Clone, Debug)]
pub struct ModelBuilder {
    labels: Vec<usize>,
    unary: Vec<Vec<f64>>,
    edges: Vec<(usize, usize, Vec<f64>)>,
    names: Option<Vec<usize>>,
    bad_unary: Option<usize>,
}

impl ModelBuilder {
    pub fn new(labels: Vec<usize>) -> Self {
        let unary = labels.iter().map(|&l| vec![0.0; l]).collect();
        Self {
            labels,
            unary,
            edges: Vec::new(),
            names: None,
            bad_unary: None,
        }
    }

    pub fn binary(n: usize) -> Self {
        Self::new(vec![2; n])
    }

    pub fn unary(mut self, var: usize, table: Vec<f64>) -> Self {
        if var < self.unary.len() {
            self.unary[var] = table;
        } else {
            self.bad_unary.get_or_insert(var);
        }
        self
    }

    /// Adds the table `θ_ij` in `(i, j)` orientation, row-major `L_i × L_j`.
    pub fn edge(mut self, i: usize, j: usize, table: Vec<f64>) -> Self {
        self.edges.push((i, j, table));
        self
    }

    /// Stable external identifiers, strictly increasing.
    pub fn names(mut self, names: Vec<usize>) -> Self {
        self.names = Some(names);
        self
    }

    pub fn build(self) -> Result<PairwiseModel> {
        let n = self.labels.len();
        if let Some(v) = self.bad_unary {
            return Err(Error::input(format!("unary table for missing variable {v}")));
        }
        if let Some(i) = self.labels.iter().position(|&l| l < 2) {
            return Err(Error::input(format!("variable {i} has fewer than 2 labels")));
        }
        for (i, t) in self.unary.iter().enumerate() {
            if t.len() != self.labels[i] {
                return Err(Error::input(format!(
                    "unary table of variable {i} has {} entries, expected {}",
                    t.len(),
                    self.labels[i]
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("non-finite potential on variable {i}")));
            }
        }
        let names = match self.names {
            Some(names) => {
                if names.len() != n || names.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::input("names must be strictly increasing, one per variable"));
                }
                names
            }
            None => (0..n).collect(),
        };

        let mut edges = Vec::with_capacity(self.edges.len());
        let mut lookup = HashMap::new();
        let mut adjacency = vec![Vec::new(); n];
        for (a, b, table) in self.edges {
            if a >= n || b >= n {
                return Err(Error::input(format!("edge ({a}, {b}) references a missing variable")));
            }
            if a == b {
                return Err(Error::input(format!("self-loop on variable {a}")));
            }
            let (la, lb) = (self.labels[a], self.labels[b]);
            if table.len() != la * lb {
                return Err(Error::input(format!(
                    "edge ({a}, {b}) table has {} entries, expected {}",
                    table.len(),
                    la * lb
                )));
            }
            if table.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("non-finite potential on edge ({a}, {b})")));
            }
            let (i, j, table) = if a < b {
                (a, b, table)
            } else {
                let mut t = vec![0.0; table.len()];
                for x in 0..la {
                    for y in 0..lb {
                        t[y * la + x] = table[x * lb + y];
                    }
                }
                (b, a, t)
            };
            if lookup.contains_key(&(i, j)) {
                return Err(Error::input(format!("duplicate edge ({i}, {j})")));
            }
            let idx = edges.len();
            lookup.insert((i, j), idx);
            adjacency[i].push((j, idx));
            adjacency[j].push((i, idx));
            edges.push(Edge {
                i,
                j,
                cols: self.labels[j],
                table,
            });
        }

        Ok(PairwiseModel {
            labels: self.labels,
            unary: self.unary,
            edges,
            adjacency,
            lookup,
            names,
        })
    }
}

/// Binary `(θ, W)` parameterization of a model with all `L_i = 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryView {
    pub theta: Vec<f64>,
    /// Indexed like [`PairwiseModel::edges`].
    pub w: Vec<f64>,
    /// `-E_tables(x) = -E_view(x) + constant` for every configuration.
    pub constant: f64,
}

/// Record of clamped variables relative to the root model.
#[derive(Clone, Debug, PartialEq)]
pub struct ClampMap {
    /// `(original variable, label)` in clamping order.
    pub assignments: Vec<(usize, usize)>,
    /// Surviving variable position → original variable.
    pub index_map: Vec<usize>,
    /// Log-constant carried by the clamped potentials: `A_parent(x) = A_child + log_offset`.
    pub log_offset: f64,
}

impl ClampMap {
    pub fn identity(model: &PairwiseModel) -> Self {
        Self {
            assignments: Vec::new(),
            index_map: model.names.clone(),
            log_offset: 0.0,
        }
    }

    /// Composition: `self` followed by a clamp of the resulting model.
    pub fn then(&self, next: &ClampMap) -> ClampMap {
        let mut assignments = self.assignments.clone();
        assignments.extend_from_slice(&next.assignments);
        ClampMap {
            assignments,
            index_map: next.index_map.clone(),
            log_offset: self.log_offset + next.log_offset,
        }
    }

    /// Labels in clamping order.
    pub fn label_path(&self) -> Vec<usize> {
        self.assignments.iter().map(|&(_, l)| l).collect()
    }
}

impl PairwiseModel {
    /// Model with no variables; its log-partition function is 0.
    pub fn empty() -> Self {
        ModelBuilder::new(Vec::new()).build().expect("empty model is valid")
    }

    /// Builds the binary model whose energy is exactly
    /// `-Σ θ_i x_i - Σ (W_ij/2)[x_i x_j + (1-x_i)(1-x_j)]`.
    pub fn from_binary(theta: &[f64], w: &[(usize, usize, f64)]) -> Result<Self> {
        let mut b = ModelBuilder::binary(theta.len());
        for (i, &t) in theta.iter().enumerate() {
            b = b.unary(i, vec![0.0, t]);
        }
        for &(i, j, wij) in w {
            let h = wij / 2.0;
            b = b.edge(i, j, vec![h, 0.0, 0.0, h]);
        }
        b.build()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_labels(&self, var: usize) -> usize {
        self.labels[var]
    }

    pub fn unary(&self, var: usize) -> &[f64] {
        &self.unary[var]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// `(neighbor, edge index)` pairs.
    pub fn neighbors(&self, var: usize) -> &[(usize, usize)] {
        &self.adjacency[var]
    }

    pub fn degree(&self, var: usize) -> usize {
        self.adjacency[var].len()
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.lookup.get(&key).copied()
    }

    /// `θ_ab(x_a, x_b)` in either orientation; 0 when there is no edge.
    pub fn pairwise(&self, a: usize, b: usize, x_a: usize, x_b: usize) -> f64 {
        match self.edge_between(a, b) {
            Some(e) => self.edges[e].value_from(a, x_a, x_b),
            None => 0.0,
        }
    }

    /// Original identifiers of the variables.
    pub fn names(&self) -> &[usize] {
        &self.names
    }

    /// Position of the variable with original identifier `name`.
    pub fn position_of(&self, name: usize) -> Option<usize> {
        self.names.binary_search(&name).ok()
    }

    pub fn is_binary(&self) -> bool {
        self.labels.iter().all(|&l| l == 2)
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    fn check_config(&self, config: &[usize]) -> Result<()> {
        if config.len() != self.n() {
            return Err(Error::input(format!(
                "configuration has {} entries, model has {} variables",
                config.len(),
                self.n()
            )));
        }
        for (i, (&x, &l)) in config.iter().zip(&self.labels).enumerate() {
            if x >= l {
                return Err(Error::input(format!("label {x} out of range for variable {i} (L = {l})")));
            }
        }
        Ok(())
    }

    /// `E(x) = -Σ θ_i(x_i) - Σ θ_ij(x_i, x_j)`.
    pub fn energy(&self, config: &[usize]) -> Result<f64> {
        self.check_config(config)?;
        Ok(self.energy_unchecked(config))
    }

    pub(crate) fn energy_unchecked(&self, config: &[usize]) -> f64 {
        let unary: f64 = config.iter().enumerate().map(|(i, &x)| self.unary[i][x]).sum();
        let pair: f64 = self
            .edges
            .iter()
            .map(|e| e.value(config[e.i], config[e.j]))
            .sum();
        -(unary + pair)
    }

    fn require_binary(&self, what: &str) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{what} requires a binary model")))
        }
    }

    pub fn binary_view(&self) -> Result<BinaryView> {
        self.require_binary("binary view")?;
        let mut theta: Vec<f64> = self.unary.iter().map(|u| u[1] - u[0]).collect();
        let mut constant: f64 = self.unary.iter().map(|u| u[0]).sum();
        let mut w = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let (t00, t01, t10, t11) = (e.value(0, 0), e.value(0, 1), e.value(1, 0), e.value(1, 1));
            let wij = t11 - t10 - t01 + t00;
            theta[e.i] += t10 - t00 + wij / 2.0;
            theta[e.j] += t01 - t00 + wij / 2.0;
            constant += t00 - wij / 2.0;
            w.push(wij);
        }
        Ok(BinaryView { theta, w, constant })
    }

    /// Clamps `var` to `label`.
    ///
    /// The child has the remaining variables in their original order. Each edge
    /// `(var, j)` is absorbed into `θ_j`, and `θ_var(label)` is returned as
    /// `log_offset` so that `A(child) + log_offset` equals the parent's
    /// sub-partition function `log Z(x_var = label)`.
    pub fn clamp(&self, var: usize, label: usize) -> Result<(PairwiseModel, ClampMap)> {
        if var >= self.n() {
            return Err(Error::input(format!("variable {var} out of range (n = {})", self.n())));
        }
        if label >= self.labels[var] {
            return Err(Error::input(format!(
                "label {label} out of range for variable {var} (L = {})",
                self.labels[var]
            )));
        }
        let reindex = |k: usize| if k < var { k } else { k - 1 };
        let mut unary = self.unary.clone();
        for &(j, e) in &self.adjacency[var] {
            let edge = &self.edges[e];
            for (xj, u) in unary[j].iter_mut().enumerate() {
                *u += edge.value_from(var, label, xj);
            }
        }
        let offset = unary[var][label];
        unary.remove(var);
        let mut labels = self.labels.clone();
        labels.remove(var);
        let mut names = self.names.clone();
        let clamped_name = names.remove(var);

        let mut b = ModelBuilder {
            labels,
            unary,
            edges: Vec::with_capacity(self.edges.len()),
            names: Some(names.clone()),
            bad_unary: None,
        };
        for e in self.edges.iter().filter(|e| e.i != var && e.j != var) {
            b.edges.push((reindex(e.i), reindex(e.j), e.table.clone()));
        }
        let child = b.build()?;
        let map = ClampMap {
            assignments: vec![(clamped_name, label)],
            index_map: names,
            log_offset: offset,
        };
        Ok((child, map))
    }

    /// Clamps the variable whose original identifier is `name`.
    pub fn clamp_name(&self, name: usize, label: usize) -> Result<(PairwiseModel, ClampMap)> {
        let pos = self
            .position_of(name)
            .ok_or_else(|| Error::input(format!("variable {name} is not present in the model")))?;
        self.clamp(pos, label)
    }

    /// Relabels `x_i → 1 - x_i` for every `i` in `subset`. Binary models only.
    pub fn flip(&self, subset: &[usize]) -> Result<PairwiseModel> {
        self.require_binary("flip")?;
        let mut flipped = vec![false; self.n()];
        for &v in subset {
            if v >= self.n() {
                return Err(Error::input(format!("variable {v} out of range")));
            }
            flipped[v] = true;
        }
        let mut out = self.clone();
        for (i, u) in out.unary.iter_mut().enumerate() {
            if flipped[i] {
                u.swap(0, 1);
            }
        }
        for e in out.edges.iter_mut() {
            let t = e.table.clone();
            for a in 0..2 {
                for b in 0..2 {
                    let sa = if flipped[e.i] { 1 - a } else { a };
                    let sb = if flipped[e.j] { 1 - b } else { b };
                    e.table[a * 2 + b] = t[sa * 2 + sb];
                }
            }
        }
        Ok(out)
    }

    /// Sub-model induced on `keep` (positions, any order); names are preserved.
    pub fn induced(&self, keep: &[usize]) -> Result<PairwiseModel> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut pos = vec![usize::MAX; self.n()];
        for (k, &v) in keep.iter().enumerate() {
            if v >= self.n() {
                return Err(Error::input(format!("variable {v} out of range")));
            }
            pos[v] = k;
        }
        let mut b = ModelBuilder::new(keep.iter().map(|&v| self.labels[v]).collect())
            .names(keep.iter().map(|&v| self.names[v]).collect());
        for (k, &v) in keep.iter().enumerate() {
            b = b.unary(k, self.unary[v].clone());
        }
        for e in &self.edges {
            if pos[e.i] != usize::MAX && pos[e.j] != usize::MAX {
                b = b.edge(pos[e.i], pos[e.j], e.table.clone());
            }
        }
        b.build()
    }

    /// Connected components as sorted lists of positions.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for &(v, _) in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Number of joint configurations, or `None` on overflow.
    pub fn state_space(&self) -> Option<u128> {
        self.labels
            .iter()
            .try_fold(1u128, |acc, &l| acc.checked_mul(l as u128))
    }
}
