//! Random and structured binary model families.
//!
//! Every parameter draw comes from its own ChaCha stream keyed by
//! `(seed, STREAM_VERSION, kind, index)`, so a unary field depends only on its
//! variable and a coupling only on its endpoint pair. Changing the edge set
//! leaves all other draws untouched.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::PairwiseModel;

/// Bumped whenever the mapping from seeds to draws changes.
pub const STREAM_VERSION: u64 = 1;
/// Attempts allowed for the rejection sampler of random regular graphs.
pub const REGULAR_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Cycle,
    Complete,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Grid { rows: usize, cols: usize, toroidal: bool },
    /// `p = None` targets average degree 4.
    Erdos { n: usize, p: Option<f64> },
    /// Connected simple `d`-regular graph.
    Regular { n: usize, d: usize },
    Complete { n: usize },
    /// No unary fields and one shared coupling `w`.
    Symmetric { topology: Topology, n: usize, w: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub family: Family,
    pub theta_range: (f64, f64),
    pub w_range: (f64, f64),
    pub seed: u64,
}

impl GenSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            theta_range: (-2.0, 2.0),
            w_range: (-6.0, 6.0),
            seed: 0,
        }
    }

    pub fn theta(mut self, lo: f64, hi: f64) -> Self {
        self.theta_range = (lo, hi);
        self
    }

    pub fn w(mut self, lo: f64, hi: f64) -> Self {
        self.w_range = (lo, hi);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("theta", self.theta_range), ("w", self.w_range)] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::input(format!("{name} range [{lo}, {hi}] is not an ordered finite interval")));
            }
        }
        match self.family {
            Family::Grid { rows, cols, .. } if rows == 0 || cols == 0 => Err(Error::input("grid dimensions must be positive")),
            Family::Erdos { p: Some(p), .. } if !(0.0..=1.0).contains(&p) => {
                Err(Error::input(format!("edge probability {p} outside [0, 1]")))
            }
            Family::Regular { n, d } if d >= n || (n * d) % 2 == 1 => {
                Err(Error::input(format!("no simple {d}-regular graph on {n} vertices")))
            }
            Family::Symmetric { n, topology: Topology::Cycle, .. } if n < 3 => Err(Error::input("a cycle needs at least 3 vertices")),
            Family::Symmetric { w, .. } if !w.is_finite() => Err(Error::input("coupling must be finite")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Grid { rows, cols, toroidal } => {
                write!(f, "grid rows={rows} cols={cols} toroidal={toroidal}")?
            }
            Family::Erdos { n, p } => match p {
                Some(p) => write!(f, "erdos n={n} p={p}")?,
                None => write!(f, "erdos n={n} p=avgdeg4")?,
            },
            Family::Regular { n, d } => write!(f, "regular n={n} d={d}")?,
            Family::Complete { n } => write!(f, "complete n={n}")?,
            Family::Symmetric { topology, n, w } => {
                let t = match topology {
                    Topology::Cycle => "cycle",
                    Topology::Complete => "complete",
                };
                return write!(f, "symmetric {t} n={n} w={w}");
            }
        }
        write!(
            f,
            " theta=[{},{}] w=[{},{}] seed={} stream=v{STREAM_VERSION}",
            self.theta_range.0, self.theta_range.1, self.w_range.0, self.w_range.1, self.seed
        )
    }
}

const KIND_STRUCTURE: u64 = 0;
const KIND_UNARY: u64 = 1;
const KIND_COUPLING: u64 = 2;

fn stream(seed: u64, kind: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&STREAM_VERSION.to_le_bytes());
    key[16..24].copy_from_slice(&kind.to_le_bytes());
    key[24..].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn pair_index(i: usize, j: usize) -> u64 {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    ((a as u64) << 32) | b as u64
}

pub fn generate(spec: &GenSpec) -> Result<PairwiseModel> {
    spec.validate()?;
    let (n, edges) = structure(spec)?;
    if let Family::Symmetric { w, .. } = spec.family {
        let e: Vec<_> = edges.into_iter().map(|(i, j)| (i, j, w)).collect();
        return PairwiseModel::from_binary(&vec![0.0; n], &e);
    }
    let theta: Vec<f64> = (0..n)
        .map(|i| uniform(&mut stream(spec.seed, KIND_UNARY, i as u64), spec.theta_range))
        .collect();
    let e: Vec<_> = edges
        .into_iter()
        .map(|(i, j)| {
            let w = uniform(&mut stream(spec.seed, KIND_COUPLING, pair_index(i, j)), spec.w_range);
            (i, j, w)
        })
        .collect();
    PairwiseModel::from_binary(&theta, &e)
}

fn structure(spec: &GenSpec) -> Result<(usize, Vec<(usize, usize)>)> {
    let mut rng = stream(spec.seed, KIND_STRUCTURE, 0);
    Ok(match spec.family {
        Family::Grid { rows, cols, toroidal } => {
            let id = |r: usize, c: usize| r * cols + c;
            let mut set = BTreeSet::new();
            let mut add = |a: usize, b: usize| {
                if a != b {
                    set.insert((a.min(b), a.max(b)));
                }
            };
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols || (toroidal && cols > 1) {
                        add(id(r, c), id(r, (c + 1) % cols));
                    }
                    if r + 1 < rows || (toroidal && rows > 1) {
                        add(id(r, c), id((r + 1) % rows, c));
                    }
                }
            }
            (rows * cols, set.into_iter().collect())
        }
        Family::Erdos { n, p } => {
            let p = p.unwrap_or(if n > 1 { (4.0 / (n - 1) as f64).min(1.0) } else { 0.0 });
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(p) {
                        edges.push((i, j));
                    }
                }
            }
            (n, edges)
        }
        Family::Regular { n, d } => (n, random_regular(n, d, &mut rng)?),
        Family::Complete { n } | Family::Symmetric { topology: Topology::Complete, n, .. } => {
            (n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect())
        }
        Family::Symmetric { topology: Topology::Cycle, n, .. } => {
            let mut e: Vec<_> = (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n))).collect();
            e.sort_unstable();
            (n, e)
        }
    })
}

/// Configuration-model pairing, rejecting loops, multi-edges and
/// disconnected outcomes.
fn random_regular(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    if d == 0 {
        return if n <= 1 {
            Ok(Vec::new())
        } else {
            Err(Error::input("a 0-regular graph on several vertices is disconnected"))
        };
    }
    let mut points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    'attempt: for _ in 0..REGULAR_ATTEMPTS {
        points.shuffle(rng);
        let mut set = BTreeSet::new();
        for pair in points.chunks(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !set.insert((a, b)) {
                continue 'attempt;
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        if is_connected(n, &edges) {
            return Ok(edges);
        }
    }
    Err(Error::Retry(format!(
        "no connected simple {d}-regular graph on {n} vertices after {REGULAR_ATTEMPTS} pairings; try another seed"
    )))
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Ten-vertex model: a 4-clique joined through a two-edge path to a degree-5
/// hub with four pendant leaves. All couplings equal `w`, no unary fields.
pub fn lamp(w: f64) -> PairwiseModel {
    let edges = [
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 2),
        (1, 3),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 6),
        (5, 7),
        (5, 8),
        (5, 9),
    ];
    let e: Vec<_> = edges.iter().map(|&(i, j)| (i, j, w)).collect();
    PairwiseModel::from_binary(&[0.0; 10], &e).expect("valid fixture")
}

/// Eight-vertex model: an attractive 5-clique on 0..5 tied by an attractive
/// edge to vertex 5, which closes a frustrated triangle with 6 and 7.
pub fn barbell(w: f64) -> PairwiseModel {
    let mut e: Vec<(usize, usize, f64)> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j, w))).collect();
    e.extend([(0, 5, w), (5, 6, w), (5, 7, w), (6, 7, -w)]);
    PairwiseModel::from_binary(&[0.0; 8], &e).expect("valid fixture")
}
