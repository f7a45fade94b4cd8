//! Scores that rank variables as clamping candidates in binary models.
//!
//! All scores read only the couplings `W_ij` of the binary view. Core-based
//! heuristics first prune degree-1 vertices; vertices outside the core get a
//! `-∞` score and are never picked while the core is nonempty.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::logspace::entropy;
use crate::model::PairwiseModel;
use crate::result::{InferenceResult, Method};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Heuristic {
    /// Sum of `|W|` over incident core edges.
    MaxW,
    /// Sum of `|W|` over all incident edges, no stripping.
    MaxW0,
    /// Weighted closed-walk count through each vertex.
    Mpower,
    /// Loop-series scores of frustrated fundamental cycles.
    FrustCycles,
    /// Loop-series scores of all fundamental cycles.
    StrongCycles,
}

impl Heuristic {
    pub const ALL: [Heuristic; 5] = [
        Heuristic::MaxW,
        Heuristic::MaxW0,
        Heuristic::Mpower,
        Heuristic::FrustCycles,
        Heuristic::StrongCycles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::MaxW => "maxW",
            Heuristic::MaxW0 => "maxW0",
            Heuristic::Mpower => "Mpower",
            Heuristic::FrustCycles => "frustCycles",
            Heuristic::StrongCycles => "strongCycles",
        }
    }
}

/// A base heuristic, optionally scaled by TRW singleton entropies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HeuristicSpec {
    pub base: Heuristic,
    pub tre: bool,
}

impl HeuristicSpec {
    pub const fn plain(base: Heuristic) -> Self {
        Self { base, tre: false }
    }

    pub const fn tre(base: Heuristic) -> Self {
        Self { base, tre: true }
    }

    /// The five base heuristics followed by their entropy-scaled versions.
    pub fn basket() -> Vec<HeuristicSpec> {
        Heuristic::ALL
            .iter()
            .map(|&h| Self::plain(h))
            .chain(Heuristic::ALL.iter().map(|&h| Self::tre(h)))
            .collect()
    }
}

impl fmt::Display for HeuristicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.tre {
            write!(f, "TRE-{}", self.base.name())
        } else {
            f.write_str(self.base.name())
        }
    }
}

impl FromStr for HeuristicSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (tre, base) = match lower.strip_prefix("tre-").or_else(|| lower.strip_prefix("tre")) {
            Some(rest) => (true, rest),
            None => (false, lower.as_str()),
        };
        let base = Heuristic::ALL
            .iter()
            .copied()
            .find(|h| h.name().to_ascii_lowercase() == base)
            .ok_or_else(|| Error::input(format!("unknown heuristic {s:?}")))?;
        Ok(Self { base, tre })
    }
}

/// Per-variable scores of one heuristic, indexed by position in the scored
/// model.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionScore {
    pub heuristic: String,
    pub scores: Vec<f64>,
    /// Positions that were scored, ascending. Identity when nothing was stripped.
    pub core_map: Vec<usize>,
    /// Stripping left nothing, so the whole graph was scored instead.
    pub core_empty: bool,
    /// Every scored vertex has score zero, so the ranking carries no signal.
    pub degenerate: bool,
}

impl SelectionScore {
    fn from_core(heuristic: &str, n: usize, core_map: Vec<usize>, core_scores: Vec<f64>, core_empty: bool) -> Self {
        let mut scores = vec![f64::NEG_INFINITY; n];
        for (&v, &s) in core_map.iter().zip(&core_scores) {
            scores[v] = s;
        }
        let degenerate = core_scores.iter().all(|&s| s == 0.0);
        Self {
            heuristic: heuristic.to_string(),
            scores,
            core_map,
            core_empty,
            degenerate,
        }
    }

    /// Highest finite score among positions not in `exclude`; ties go to the
    /// lowest position.
    pub fn argmax(&self, exclude: &[usize]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (v, &s) in self.scores.iter().enumerate() {
            if s == f64::NEG_INFINITY || exclude.contains(&v) {
                continue;
            }
            if best.map_or(true, |b| s > self.scores[b]) {
                best = Some(v);
            }
        }
        best
    }
}

/// Repeatedly deletes degree-1 vertices. Returns the induced core and the
/// positions in `model` of its vertices. Isolated vertices are dropped too.
pub fn strip_to_core(model: &PairwiseModel) -> Result<(PairwiseModel, Vec<usize>)> {
    let keep = core_positions(model);
    Ok((model.induced(&keep)?, keep))
}

fn core_positions(model: &PairwiseModel) -> Vec<usize> {
    let n = model.n();
    let mut degree: Vec<usize> = (0..n).map(|v| model.degree(v)).collect();
    let mut alive = vec![true; n];
    let mut stack: Vec<usize> = (0..n).filter(|&v| degree[v] <= 1).collect();
    while let Some(v) = stack.pop() {
        if !alive[v] {
            continue;
        }
        alive[v] = false;
        for &(u, _) in model.neighbors(v) {
            if alive[u] {
                degree[u] -= 1;
                if degree[u] == 1 {
                    stack.push(u);
                }
            }
        }
    }
    (0..n).filter(|&v| alive[v]).collect()
}

/// Positions to score: the core, or everything when the core is empty or
/// stripping is off.
fn scored_positions(model: &PairwiseModel, strip: bool) -> (Vec<usize>, bool) {
    let all: Vec<usize> = (0..model.n()).collect();
    if !strip {
        return (all, false);
    }
    let core = core_positions(model);
    if core.is_empty() {
        (all, true)
    } else {
        (core, false)
    }
}

/// Couplings restricted to `keep`: `(a, b, W)` with local indices.
fn local_couplings(model: &PairwiseModel, keep: &[usize]) -> Result<Vec<(usize, usize, f64)>> {
    let view = model.binary_view()?;
    let mut local = vec![usize::MAX; model.n()];
    for (k, &v) in keep.iter().enumerate() {
        local[v] = k;
    }
    Ok(model
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| local[e.i] != usize::MAX && local[e.j] != usize::MAX)
        .map(|(k, e)| (local[e.i], local[e.j], view.w[k]))
        .collect())
}

pub fn score_maxw(model: &PairwiseModel, strip: bool) -> Result<SelectionScore> {
    let (keep, core_empty) = scored_positions(model, strip);
    let mut s = vec![0.0; keep.len()];
    for (a, b, w) in local_couplings(model, &keep)? {
        s[a] += w.abs();
        s[b] += w.abs();
    }
    let name = if strip { Heuristic::MaxW } else { Heuristic::MaxW0 }.name();
    Ok(SelectionScore::from_core(name, model.n(), keep, s, core_empty))
}

/// `M_ij = tanh|W_ij / 4| / (n - 1)` on the scored vertex set.
fn walk_matrix(n: usize, couplings: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let scale = 1.0 / (n.max(2) - 1) as f64;
    for &(a, b, w) in couplings {
        let v = (w / 4.0).abs().tanh() * scale;
        m[(a, b)] = v;
        m[(b, a)] = v;
    }
    m
}

/// `[(I - M)⁻¹ - I]_ii - s_i / (1 - s_i)` with `s_i = [M²]_ii`: the weighted
/// closed walks at `i` minus those made only of single-edge excursions.
pub fn score_mpower(model: &PairwiseModel) -> Result<SelectionScore> {
    let (keep, core_empty) = scored_positions(model, true);
    let n = keep.len();
    let m = walk_matrix(n, &local_couplings(model, &keep)?);
    let id = DMatrix::<f64>::identity(n, n);
    let inv = (&id - &m)
        .try_inverse()
        .ok_or_else(|| Error::input("walk matrix I - M is singular"))?;
    let m2 = &m * &m;
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let si = m2[(i, i)];
            (inv[(i, i)] - 1.0 - si / (1.0 - si)).max(0.0)
        })
        .collect();
    Ok(SelectionScore::from_core(Heuristic::Mpower.name(), model.n(), keep, s, core_empty))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CycleMode {
    Frustrated,
    Strong,
}

/// Fundamental cycles of a maximum-weight spanning forest on `tanh|W/4|`, each
/// scored by `log(1 + Π tanh(W/4))` with signed couplings.
pub fn score_cycles(model: &PairwiseModel, mode: CycleMode) -> Result<SelectionScore> {
    let (keep, core_empty) = scored_positions(model, true);
    let n = keep.len();
    let couplings = local_couplings(model, &keep)?;
    let strength = |w: f64| (w / 4.0).abs().tanh();

    let mut order: Vec<usize> = (0..couplings.len()).collect();
    order.sort_by(|&a, &b| {
        strength(couplings[b].2)
            .partial_cmp(&strength(couplings[a].2))
            .expect("finite couplings")
            .then(a.cmp(&b))
    });
    let mut dsu: Vec<usize> = (0..n).collect();
    fn find(dsu: &mut [usize], mut x: usize) -> usize {
        while dsu[x] != x {
            dsu[x] = dsu[dsu[x]];
            x = dsu[x];
        }
        x
    }
    let mut tree_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut off_tree = Vec::new();
    for k in order {
        let (a, b, w) = couplings[k];
        let (ra, rb) = (find(&mut dsu, a), find(&mut dsu, b));
        if ra == rb {
            off_tree.push(k);
        } else {
            dsu[ra] = rb;
            tree_adj[a].push((b, w));
            tree_adj[b].push((a, w));
        }
    }
    off_tree.sort_unstable();

    // root every tree of the forest to get parent pointers and depths
    let mut parent: Vec<(usize, f64)> = vec![(usize::MAX, 0.0); n];
    let mut depth = vec![usize::MAX; n];
    for root in 0..n {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &(v, w) in &tree_adj[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = (u, w);
                    stack.push(v);
                }
            }
        }
    }

    let mut s = vec![0.0; n];
    for k in off_tree {
        let (a, b, w) = couplings[k];
        let mut product = (w / 4.0).tanh();
        let mut cycle = Vec::new();
        let (mut x, mut y) = (a, b);
        while x != y {
            let step = if depth[x] >= depth[y] { &mut x } else { &mut y };
            cycle.push(*step);
            let (p, pw) = parent[*step];
            product *= (pw / 4.0).tanh();
            *step = p;
        }
        cycle.push(x);
        let score = product.ln_1p();
        if mode == CycleMode::Strong || score < 0.0 {
            cycle.iter().for_each(|&v| s[v] += score);
        }
    }
    s.iter_mut().for_each(|v| *v = v.abs());
    let name = match mode {
        CycleMode::Frustrated => Heuristic::FrustCycles.name(),
        CycleMode::Strong => Heuristic::StrongCycles.name(),
    };
    Ok(SelectionScore::from_core(name, model.n(), keep, s, core_empty))
}

pub fn score(model: &PairwiseModel, heuristic: Heuristic) -> Result<SelectionScore> {
    match heuristic {
        Heuristic::MaxW => score_maxw(model, true),
        Heuristic::MaxW0 => score_maxw(model, false),
        Heuristic::Mpower => score_mpower(model),
        Heuristic::FrustCycles => score_cycles(model, CycleMode::Frustrated),
        Heuristic::StrongCycles => score_cycles(model, CycleMode::Strong),
    }
}

/// Multiplies each finite score by the matching entropy (nats).
pub fn tre_adjust_entropies(scores: &SelectionScore, entropies: &[f64]) -> Result<SelectionScore> {
    if entropies.len() != scores.scores.len() {
        return Err(Error::input(format!(
            "{} entropies for {} scored variables",
            entropies.len(),
            scores.scores.len()
        )));
    }
    let mut out = scores.clone();
    for (s, h) in out.scores.iter_mut().zip(entropies) {
        if s.is_finite() {
            *s *= h;
        }
    }
    out.heuristic = format!("TRE-{}", scores.heuristic);
    out.degenerate = out.core_map.iter().all(|&v| out.scores[v] == 0.0);
    Ok(out)
}

/// Scales scores by the singleton entropies of a TRW result on the same model.
pub fn tre_adjust(scores: &SelectionScore, model: &PairwiseModel, trw: &InferenceResult) -> Result<SelectionScore> {
    if trw.method != Method::Trw {
        return Err(Error::input("entropy scaling needs a TRW result"));
    }
    let entropies = (0..model.n())
        .map(|v| {
            trw.marginals
                .singleton(v)
                .map(entropy)
                .ok_or_else(|| Error::input("TRW result carries no marginals"))
        })
        .collect::<Result<Vec<_>>>()?;
    tre_adjust_entropies(scores, &entropies)
}

/// Inputs beyond the model that a selection may use.
#[derive(Clone, Debug, Default)]
pub struct SelectContext {
    /// Original variable identifiers that must not be picked.
    pub exclude: Vec<usize>,
    /// TRW singleton entropies by position; required by entropy-scaled heuristics.
    pub entropies: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pick {
    /// Original identifier of the chosen variable.
    pub var: usize,
    /// The heuristic carried no signal and unstripped maxW decided instead.
    pub fallback: bool,
}

pub fn select_variable(model: &PairwiseModel, heuristic: HeuristicSpec, ctx: &SelectContext) -> Result<Pick> {
    let exclude: Vec<usize> = ctx.exclude.iter().filter_map(|&name| model.position_of(name)).collect();
    if exclude.len() == model.n() {
        return Err(Error::Exhausted("no variables left to clamp".into()));
    }
    let mut scores = score(model, heuristic.base)?;
    if heuristic.tre {
        let h = ctx
            .entropies
            .as_ref()
            .ok_or_else(|| Error::input(format!("{heuristic} needs TRW singleton entropies")))?;
        scores = tre_adjust_entropies(&scores, h)?;
    }
    let usable = !scores.degenerate && scores.argmax(&exclude).is_some();
    if usable {
        let v = scores.argmax(&exclude).expect("checked");
        return Ok(Pick {
            var: model.names()[v],
            fallback: false,
        });
    }
    let v = score_maxw(model, false)?
        .argmax(&exclude)
        .ok_or_else(|| Error::Exhausted("no variables left to clamp".into()))?;
    Ok(Pick {
        var: model.names()[v],
        fallback: true,
    })
}

/// Rows `heuristic,var,score`, with `var` the original identifier.
pub fn write_scores_csv<W: Write>(model: &PairwiseModel, scores: &[SelectionScore], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["heuristic", "var", "score"])?;
    for s in scores {
        for (v, x) in s.scores.iter().enumerate() {
            w.write_record([s.heuristic.clone(), model.names()[v].to_string(), x.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
