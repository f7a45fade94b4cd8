//! Clamp-and-sum estimation.
//!
//! Clamping variable `i` to each of its labels splits `Z` exactly into
//! sub-partition functions. Running an approximate method on every child and
//! combining `Ã^(i) = log Σ_x exp Ã(x)` refines the root estimate; for TRW
//! (children keep the parent's edge weights) it can only lower the bound and
//! for warm-started mean field it can only raise it. Repeating the step over
//! several rounds grows a tree of branches, one leaf per joint assignment.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::bethe::{bethe_optimize, BpConfig, MessageInit};
use crate::error::{Error, Result};
use crate::exact::exact_logz;
use crate::logspace::{entropy, log_sum_exp};
use crate::meanfield::{mf_optimize, FactorizedMarginals, MfConfig, MfInit};
use crate::model::{ClampMap, PairwiseModel};
use crate::result::{Bound, InferenceResult, Marginals, Method};
use crate::select::{select_variable, Heuristic, HeuristicSpec, SelectContext};
use crate::trw::{default_tree_weights, trw_optimize, EdgeAppearance};

/// Source of TRW edge weights for clamped children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RhoPolicy {
    /// The parent's weights on the surviving edges, not renormalized.
    #[default]
    ParentRestricted,
    /// Fresh spanning-tree weights for each child graph.
    Recompute,
}

#[derive(Clone, Debug)]
pub struct ClampConfig {
    pub mf: MfConfig,
    pub bethe: BpConfig,
    pub trw: BpConfig,
    pub rho_policy: RhoPolicy,
    /// Seed for sampled tree weights on large models.
    pub rho_seed: u64,
}

impl Default for ClampConfig {
    fn default() -> Self {
        Self {
            mf: MfConfig::default(),
            bethe: BpConfig::default(),
            trw: BpConfig::trw(),
            rho_policy: RhoPolicy::default(),
            rho_seed: 0,
        }
    }
}

impl ClampConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.mf.seed = seed;
        self.bethe.seed = seed;
        self.trw.seed = seed;
        self.rho_seed = seed;
        self
    }
}

fn exact_result(model: &PairwiseModel) -> Result<InferenceResult> {
    let start = Instant::now();
    Ok(InferenceResult {
        log_z: exact_logz(model)?,
        marginals: Marginals::None,
        method: Method::Exact,
        bound: Bound::None,
        converged: true,
        iters: 0,
        wall_time: start.elapsed().as_secs_f64(),
        messages: None,
    })
}

/// One estimator run with default settings from `cfg`; TRW uses
/// [`default_tree_weights`].
pub fn infer(model: &PairwiseModel, method: Method, cfg: &ClampConfig) -> Result<InferenceResult> {
    Ok(Branch::root(model, method, cfg)?.result)
}

/// A clamped sub-model with its estimate.
#[derive(Clone, Debug)]
pub struct Branch {
    pub model: PairwiseModel,
    /// Clamps applied since the root, with the accumulated log-offset.
    pub map: ClampMap,
    pub result: InferenceResult,
    /// TRW edge weights in use on this branch.
    pub rho: Option<EdgeAppearance>,
}

impl Branch {
    pub fn root(model: &PairwiseModel, method: Method, cfg: &ClampConfig) -> Result<Branch> {
        let (result, rho) = match method {
            Method::MeanField => (mf_optimize(model, &cfg.mf)?, None),
            Method::Bethe => (bethe_optimize(model, &cfg.bethe)?, None),
            Method::Trw => {
                let rho = default_tree_weights(model, cfg.rho_seed)?;
                (trw_optimize(model, &rho, &cfg.trw)?, Some(rho))
            }
            Method::Exact => (exact_result(model)?, None),
        };
        Ok(Branch {
            model: model.clone(),
            map: ClampMap::identity(model),
            result,
            rho,
        })
    }

    /// Estimate of the root sub-partition function of this branch.
    pub fn estimate(&self) -> f64 {
        self.result.log_z + self.map.log_offset
    }

    /// Children for every label of the variable with original identifier
    /// `name`, in ascending label order, each warm-started from this branch.
    pub fn expand(&self, name: usize, cfg: &ClampConfig) -> Result<Vec<Branch>> {
        let pos = self
            .model
            .position_of(name)
            .ok_or_else(|| Error::input(format!("variable {name} is not free in this branch")))?;
        (0..self.model.num_labels(pos))
            .map(|label| {
                let (child, step) = self.model.clamp(pos, label)?;
                self.child(child, self.map.then(&step), cfg)
            })
            .collect()
    }

    fn child(&self, model: PairwiseModel, map: ClampMap, cfg: &ClampConfig) -> Result<Branch> {
        let (result, rho) = match self.result.method {
            Method::MeanField => {
                let mut c = cfg.mf.clone();
                if let Marginals::Factorized(q) = &self.result.marginals {
                    c.init = MfInit::Warm(restrict_factorized(q, &self.model, &model)?);
                }
                (mf_optimize(&model, &c)?, None)
            }
            Method::Bethe => {
                let mut c = cfg.bethe.clone();
                if let Some(m) = &self.result.messages {
                    c.init = MessageInit::Warm(m.restrict(&self.model, &model));
                }
                (bethe_optimize(&model, &c)?, None)
            }
            Method::Trw => {
                let rho = match (cfg.rho_policy, &self.rho) {
                    (RhoPolicy::ParentRestricted, Some(r)) => r.restrict(&self.model, &model)?,
                    _ => default_tree_weights(&model, cfg.rho_seed)?,
                };
                let mut c = cfg.trw.clone();
                if let Some(m) = &self.result.messages {
                    c.init = MessageInit::Warm(m.restrict(&self.model, &model));
                }
                (trw_optimize(&model, &rho, &c)?, Some(rho))
            }
            Method::Exact => (exact_result(&model)?, None),
        };
        Ok(Branch { model, map, result, rho })
    }
}

fn restrict_factorized(
    q: &FactorizedMarginals,
    parent: &PairwiseModel,
    child: &PairwiseModel,
) -> Result<FactorizedMarginals> {
    let probs = child
        .names()
        .iter()
        .map(|&name| {
            parent
                .position_of(name)
                .map(|p| q.get(p).to_vec())
                .ok_or_else(|| Error::input("child variable missing from parent"))
        })
        .collect::<Result<Vec<_>>>()?;
    FactorizedMarginals::new(probs)
}

/// One clamp of one variable.
#[derive(Clone, Debug)]
pub struct ClampSum {
    /// `log Σ_x exp Ã(x)`.
    pub aggregate: f64,
    /// `exp(Ã(x) - aggregate)` per label.
    pub p_tilde: Vec<f64>,
    /// `Ã(x)`: child estimate plus the clamped log-offset.
    pub child_logz: Vec<f64>,
    pub children: Vec<InferenceResult>,
}

fn summarize(children: Vec<Branch>) -> ClampSum {
    let child_logz: Vec<f64> = children.iter().map(Branch::estimate).collect();
    let aggregate = log_sum_exp(&child_logz);
    ClampSum {
        p_tilde: child_logz.iter().map(|&a| (a - aggregate).exp()).collect(),
        aggregate,
        child_logz,
        children: children.into_iter().map(|b| b.result).collect(),
    }
}

/// Clamps the variable at position `var` of `model` to each label and sums.
pub fn clamp_sum(model: &PairwiseModel, method: Method, var: usize, cfg: &ClampConfig) -> Result<ClampSum> {
    if var >= model.n() {
        return Err(Error::input(format!("variable {var} out of range (n = {})", model.n())));
    }
    let root = Branch::root(model, method, cfg)?;
    clamp_sum_from(&root, model.names()[var], cfg)
}

/// As [`clamp_sum`], starting from an already solved branch.
pub fn clamp_sum_from(branch: &Branch, name: usize, cfg: &ClampConfig) -> Result<ClampSum> {
    Ok(summarize(branch.expand(name, cfg)?))
}

/// How the next variable is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Selector {
    Heuristic(HeuristicSpec),
    /// Try every free variable.
    Greedy,
    /// Try the pick of each heuristic in the basket.
    PseudoGreedy(Vec<HeuristicSpec>),
    /// Fixed order of original identifiers.
    Sequence(Vec<usize>),
}

impl Selector {
    pub fn name(&self) -> String {
        match self {
            Selector::Heuristic(h) => h.to_string(),
            Selector::Greedy => "greedy".into(),
            Selector::PseudoGreedy(_) => "pseudo-greedy".into(),
            Selector::Sequence(s) => {
                let parts: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                format!("sequence:{}", parts.join("-"))
            }
        }
    }

    fn needs_entropies(&self) -> bool {
        match self {
            Selector::Heuristic(h) => h.tre,
            Selector::PseudoGreedy(b) => b.iter().any(|h| h.tre),
            _ => false,
        }
    }

    fn compares_aggregates(&self) -> bool {
        matches!(self, Selector::Greedy | Selector::PseudoGreedy(_))
    }
}

/// How candidate clamps are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rank {
    /// Larger aggregate is better (lower bounds).
    Max,
    /// Smaller aggregate is better (upper bounds).
    Min,
    /// Smaller TRW aggregate is better, used when the method has no direction.
    Proxy,
    /// Every candidate is equally good.
    Any,
}

fn rank_for(method: Method, model: &PairwiseModel) -> Result<Rank> {
    Ok(match method {
        Method::MeanField => Rank::Max,
        Method::Trw => Rank::Min,
        Method::Exact => Rank::Any,
        Method::Bethe => {
            if model.is_binary() && model.balance_certificate(0.0)?.is_balanced() {
                Rank::Max
            } else {
                Rank::Proxy
            }
        }
    })
}

/// Absolute margin under which two aggregates count as tied.
const TIE: f64 = 1e-10;

/// All live branches of one method, in label-ascending depth-first order.
#[derive(Clone, Debug)]
struct Frontier {
    branches: Vec<Branch>,
}

impl Frontier {
    fn aggregate(&self) -> f64 {
        let v: Vec<f64> = self.branches.iter().map(Branch::estimate).collect();
        log_sum_exp(&v)
    }

    fn expand(&self, name: usize, cfg: &ClampConfig) -> Result<Frontier> {
        let children: Vec<Vec<Branch>> = self
            .branches
            .par_iter()
            .map(|b| b.expand(name, cfg))
            .collect::<Result<_>>()?;
        Ok(Frontier {
            branches: children.into_iter().flatten().collect(),
        })
    }

    fn free_names(&self) -> Vec<usize> {
        self.branches[0].model.names().to_vec()
    }

    fn template(&self) -> &PairwiseModel {
        &self.branches[0].model
    }

    /// Singleton TRW entropies averaged over branches with weights
    /// `exp(estimate - aggregate)`.
    fn mean_entropies(&self) -> Result<Vec<f64>> {
        let agg = self.aggregate();
        let mut out = vec![0.0; self.template().n()];
        for b in &self.branches {
            let w = (b.estimate() - agg).exp();
            for (v, o) in out.iter_mut().enumerate() {
                let p = b
                    .result
                    .marginals
                    .singleton(v)
                    .ok_or_else(|| Error::input("branch result carries no marginals"))?;
                *o += w * entropy(p);
            }
        }
        Ok(out)
    }
}

/// Main frontier plus the TRW frontier used for entropies and proxy ranking.
struct Search<'a> {
    method: Method,
    rank: Rank,
    cfg: &'a ClampConfig,
    main: Frontier,
    proxy: Option<Frontier>,
}

/// Outcome of comparing candidates for one round.
struct Choice {
    var: usize,
    fallback: bool,
    expanded: Option<Frontier>,
    expanded_proxy: Option<Frontier>,
}

impl<'a> Search<'a> {
    fn new(model: &PairwiseModel, method: Method, selector: &Selector, cfg: &'a ClampConfig) -> Result<Self> {
        let rank = rank_for(method, model)?;
        let main = Frontier {
            branches: vec![Branch::root(model, method, cfg)?],
        };
        let need_proxy = method != Method::Trw
            && (selector.needs_entropies() || (rank == Rank::Proxy && selector.compares_aggregates()));
        let proxy = if need_proxy {
            Some(Frontier {
                branches: vec![Branch::root(model, Method::Trw, cfg)?],
            })
        } else {
            None
        };
        Ok(Self {
            method,
            rank,
            cfg,
            main,
            proxy,
        })
    }

    fn trw_frontier(&self) -> &Frontier {
        if self.method == Method::Trw {
            &self.main
        } else {
            self.proxy.as_ref().expect("proxy frontier present")
        }
    }

    fn context(&self, selector: &Selector) -> Result<SelectContext> {
        Ok(SelectContext {
            exclude: Vec::new(),
            entropies: if selector.needs_entropies() {
                Some(self.trw_frontier().mean_entropies()?)
            } else {
                None
            },
        })
    }

    fn heuristic_pick(&self, h: HeuristicSpec, ctx: &SelectContext) -> Result<(usize, bool)> {
        let model = self.main.template();
        match select_variable(model, h, ctx) {
            Ok(p) => Ok((p.var, p.fallback)),
            Err(Error::Exhausted(m)) => Err(Error::Exhausted(m)),
            Err(_) => {
                let p = select_variable(model, HeuristicSpec::plain(Heuristic::MaxW0), ctx)?;
                Ok((p.var, true))
            }
        }
    }

    /// Scores a candidate: the aggregate that the rank compares, plus the
    /// expansions computed along the way.
    fn evaluate(&self, name: usize) -> Result<(f64, Option<Frontier>, Option<Frontier>)> {
        if self.rank == Rank::Proxy {
            let p = self.trw_frontier().expand(name, self.cfg)?;
            Ok((p.aggregate(), None, Some(p)))
        } else {
            let m = self.main.expand(name, self.cfg)?;
            Ok((m.aggregate(), Some(m), None))
        }
    }

    /// Best of `candidates` (ascending, deduplicated) under the rank.
    fn compare(&self, candidates: &[usize]) -> Result<(Choice, Vec<(usize, f64)>)> {
        let evaluated: Vec<(f64, Option<Frontier>, Option<Frontier>)> = candidates
            .par_iter()
            .map(|&c| self.evaluate(c))
            .collect::<Result<_>>()?;
        let mut best = 0;
        for k in 1..evaluated.len() {
            let (a, b) = (evaluated[k].0, evaluated[best].0);
            let better = match self.rank {
                Rank::Max => a > b + TIE,
                Rank::Min | Rank::Proxy => a < b - TIE,
                Rank::Any => false,
            };
            if better {
                best = k;
            }
        }
        let table = candidates.iter().zip(&evaluated).map(|(&c, e)| (c, e.0)).collect();
        let (_, expanded, expanded_proxy) = evaluated.into_iter().nth(best).expect("nonempty candidates");
        Ok((
            Choice {
                var: candidates[best],
                fallback: false,
                expanded,
                expanded_proxy,
            },
            table,
        ))
    }

    fn choose(&self, selector: &Selector, round: usize) -> Result<Choice> {
        let free = self.main.free_names();
        if free.is_empty() {
            return Err(Error::Exhausted("no variables left to clamp".into()));
        }
        match selector {
            Selector::Heuristic(h) => {
                let (var, fallback) = self.heuristic_pick(*h, &self.context(selector)?)?;
                Ok(Choice {
                    var,
                    fallback,
                    expanded: None,
                    expanded_proxy: None,
                })
            }
            Selector::Sequence(seq) => {
                let var = *seq
                    .get(round)
                    .ok_or_else(|| Error::Exhausted(format!("sequence has no entry for round {}", round + 1)))?;
                if !free.contains(&var) {
                    return Err(Error::input(format!("variable {var} is not free in round {}", round + 1)));
                }
                Ok(Choice {
                    var,
                    fallback: false,
                    expanded: None,
                    expanded_proxy: None,
                })
            }
            Selector::Greedy => Ok(self.compare(&free)?.0),
            Selector::PseudoGreedy(basket) => Ok(self.pseudo_greedy(basket)?.0),
        }
    }

    fn pseudo_greedy(&self, basket: &[HeuristicSpec]) -> Result<(Choice, Vec<ProbeRow>)> {
        if basket.is_empty() {
            return Err(Error::input("pseudo-greedy needs at least one heuristic"));
        }
        let ctx = self.context(&Selector::PseudoGreedy(basket.to_vec()))?;
        let picks = basket
            .iter()
            .map(|&h| self.heuristic_pick(h, &ctx).map(|p| (h, p)))
            .collect::<Result<Vec<_>>>()?;
        let mut candidates: Vec<usize> = picks.iter().map(|(_, (v, _))| *v).collect();
        candidates.sort_unstable();
        candidates.dedup();
        let (mut choice, values) = self.compare(&candidates)?;
        let value_of: BTreeMap<usize, f64> = values.into_iter().collect();
        choice.fallback = picks.iter().all(|(_, (_, fb))| *fb);
        let table = picks.iter().map(|&(h, (v, _))| (h, v, value_of[&v])).collect();
        Ok((choice, table))
    }

    fn advance(&mut self, choice: Choice) -> Result<()> {
        self.main = match choice.expanded {
            Some(f) => f,
            None => self.main.expand(choice.var, self.cfg)?,
        };
        if let Some(p) = &self.proxy {
            self.proxy = Some(match choice.expanded_proxy {
                Some(f) => f,
                None => p.expand(choice.var, self.cfg)?,
            });
        }
        Ok(())
    }
}

/// Picks the variable whose clamp most improves the bound: highest aggregate
/// for mean field and certified Bethe, lowest for TRW, lowest TRW aggregate
/// for Bethe without a certificate. Ties go to the lowest identifier.
/// Returns the pick and the method's own aggregate for it.
pub fn greedy_select(model: &PairwiseModel, method: Method, cfg: &ClampConfig) -> Result<(usize, f64)> {
    let search = Search::new(model, method, &Selector::Greedy, cfg)?;
    let choice = search.choose(&Selector::Greedy, 0)?;
    let var = choice.var;
    let agg = match choice.expanded {
        Some(f) => f.aggregate(),
        None => search.main.expand(var, cfg)?.aggregate(),
    };
    Ok((var, agg))
}

/// Row of a pseudo-greedy comparison: heuristic, its pick, and the compared
/// aggregate (TRW aggregate when ranking by proxy).
pub type ProbeRow = (HeuristicSpec, usize, f64);

/// Like [`greedy_select`], restricted to the picks of `basket`.
pub fn pseudo_greedy_select(
    model: &PairwiseModel,
    method: Method,
    basket: &[HeuristicSpec],
    cfg: &ClampConfig,
) -> Result<(usize, f64, Vec<ProbeRow>)> {
    let selector = Selector::PseudoGreedy(basket.to_vec());
    let search = Search::new(model, method, &selector, cfg)?;
    let (choice, table) = search.pseudo_greedy(basket)?;
    let var = choice.var;
    let agg = match choice.expanded {
        Some(f) => f.aggregate(),
        None => search.main.expand(var, cfg)?.aggregate(),
    };
    Ok((var, agg, table))
}

/// Estimate of one leaf after a round.
#[derive(Clone, Debug, PartialEq)]
pub struct ChildEstimate {
    pub label_path: Vec<usize>,
    pub log_z: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Round {
    /// 1-based.
    pub round: usize,
    /// Original identifier of the clamped variable.
    pub var: usize,
    /// The selector had no usable signal and unstripped maxW chose instead.
    pub fallback: bool,
    pub children: Vec<ChildEstimate>,
    pub aggregate: f64,
    /// Estimated distribution of the clamped variable.
    pub p_tilde: Vec<f64>,
    /// Seconds spent selecting and evaluating this round.
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct ClampReport {
    pub method: Method,
    pub selector: String,
    pub root_estimate: f64,
    pub root_converged: bool,
    pub root_wall_time: f64,
    pub rounds: Vec<Round>,
    /// Assignments of the final branches, in depth-first label order.
    pub leaves: Vec<ClampMap>,
    pub exact_logz: Option<f64>,
}

impl ClampReport {
    /// Aggregate after `round` clamps, the root estimate for round 0.
    pub fn estimate_after(&self, round: usize) -> Option<f64> {
        if round == 0 {
            Some(self.root_estimate)
        } else {
            self.rounds.get(round - 1).map(|r| r.aggregate)
        }
    }

    pub fn final_estimate(&self) -> f64 {
        self.rounds.last().map_or(self.root_estimate, |r| r.aggregate)
    }

    /// Rows `round,var,label_path,child_logz,aggregate_logz,exact_logz,wall_time_ms`.
    /// Round 0 is the unclamped model. Timings are written as 0 when
    /// `timing` is off, which makes the output reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, out: W, timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "round",
            "var",
            "label_path",
            "child_logz",
            "aggregate_logz",
            "exact_logz",
            "wall_time_ms",
        ])?;
        let exact = self.exact_logz.map(|a| a.to_string()).unwrap_or_default();
        let ms = |s: f64| if timing { format!("{:.3}", s * 1e3) } else { "0".into() };
        w.write_record([
            "0".to_string(),
            String::new(),
            String::new(),
            self.root_estimate.to_string(),
            self.root_estimate.to_string(),
            exact.clone(),
            ms(self.root_wall_time),
        ])?;
        for r in &self.rounds {
            for c in &r.children {
                let path: Vec<String> = c.label_path.iter().map(|l| l.to_string()).collect();
                w.write_record([
                    r.round.to_string(),
                    r.var.to_string(),
                    path.join("-"),
                    c.log_z.to_string(),
                    r.aggregate.to_string(),
                    exact.clone(),
                    ms(r.wall_time),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `rounds` clamping rounds. Each round picks one variable for all
/// branches; the run stops early once every variable is clamped.
pub fn clamp_sequence(
    model: &PairwiseModel,
    method: Method,
    selector: &Selector,
    rounds: usize,
    cfg: &ClampConfig,
) -> Result<ClampReport> {
    if rounds == 0 {
        return Err(Error::input("at least one clamping round is required"));
    }
    let start = Instant::now();
    let mut search = Search::new(model, method, selector, cfg)?;
    let root = &search.main.branches[0];
    let mut report = ClampReport {
        method,
        selector: selector.name(),
        root_estimate: root.estimate(),
        root_converged: root.result.converged,
        root_wall_time: start.elapsed().as_secs_f64(),
        rounds: Vec::new(),
        leaves: Vec::new(),
        exact_logz: None,
    };
    for t in 0..rounds.min(model.n()) {
        let start = Instant::now();
        let choice = search.choose(selector, t)?;
        let (var, fallback) = (choice.var, choice.fallback);
        search.advance(choice)?;
        let aggregate = search.main.aggregate();
        let children: Vec<ChildEstimate> = search
            .main
            .branches
            .iter()
            .map(|b| ChildEstimate {
                label_path: b.map.label_path(),
                log_z: b.estimate(),
                converged: b.result.converged,
            })
            .collect();
        let labels = model.num_labels(model.position_of(var).expect("root variable"));
        let mut p_tilde = vec![0.0; labels];
        for c in &children {
            p_tilde[*c.label_path.last().expect("clamped")] += (c.log_z - aggregate).exp();
        }
        report.rounds.push(Round {
            round: t + 1,
            var,
            fallback,
            children,
            aggregate,
            p_tilde,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    report.leaves = search.main.branches.iter().map(|b| b.map.clone()).collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{brute_logz, exact_marginal};
    use crate::gen::barbell;

    fn cycle(n: usize, w: f64) -> PairwiseModel {
        let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, w)).collect();
        PairwiseModel::from_binary(&vec![0.0; n], &e).unwrap()
    }

    fn mixed() -> PairwiseModel {
        PairwiseModel::from_binary(
            &[0.5, -1.0, 0.3, 1.2, -0.4],
            &[(0, 1, 3.0), (1, 2, -4.0), (2, 0, 2.5), (2, 3, -3.5), (3, 4, 5.0), (4, 1, -2.0), (0, 3, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn exact_clamping_is_exact() {
        let m = mixed();
        let a = brute_logz(&m).unwrap();
        let cfg = ClampConfig::default();
        for v in 0..m.n() {
            let s = clamp_sum(&m, Method::Exact, v, &cfg).unwrap();
            assert!((s.aggregate - a).abs() < 1e-10);
            let p = exact_marginal(&m, v).unwrap();
            for (x, y) in p.iter().zip(&s.p_tilde) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn aggregation_identity() {
        let m = mixed();
        let s = clamp_sum(&m, Method::Bethe, 2, &ClampConfig::default()).unwrap();
        let mean: f64 = s.p_tilde.iter().zip(&s.child_logz).map(|(p, a)| p * a).sum();
        assert!((s.aggregate - (mean + entropy(&s.p_tilde))).abs() < 1e-10);
        assert!((s.p_tilde.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_field_clamp_stays_between_root_and_truth() {
        let m = PairwiseModel::from_binary(&[0.0, 0.0], &[(0, 1, 6.0)]).unwrap();
        let a = brute_logz(&m).unwrap();
        let cfg = ClampConfig::default();
        let root = infer(&m, Method::MeanField, &cfg).unwrap().log_z;
        let s = clamp_sum(&m, Method::MeanField, 1, &cfg).unwrap();
        assert!(s.aggregate >= root - 1e-9);
        assert!(s.aggregate <= a + 1e-9);
    }

    #[test]
    fn trw_clamp_on_frustrated_triangle() {
        let m = cycle(3, -8.0);
        let a = brute_logz(&m).unwrap();
        let cfg = ClampConfig::default();
        let root = infer(&m, Method::Trw, &cfg).unwrap().log_z;
        let s = clamp_sum(&m, Method::Trw, 0, &cfg).unwrap();
        assert!(s.aggregate >= a - 1e-6);
        assert!(s.aggregate <= root + 1e-6);
    }

    #[test]
    fn exhaustive_sequence_is_exact_for_every_method() {
        let m = mixed();
        let a = brute_logz(&m).unwrap();
        let cfg = ClampConfig::default();
        for method in Method::ALL {
            let sel = Selector::Heuristic(HeuristicSpec::plain(Heuristic::MaxW));
            let r = clamp_sequence(&m, method, &sel, m.n(), &cfg).unwrap();
            assert_eq!(r.rounds.len(), m.n());
            assert_eq!(r.leaves.len(), 1 << m.n());
            assert!((r.final_estimate() - a).abs() < 1e-10, "{method}");
        }
    }

    #[test]
    fn bound_curves_are_monotone() {
        let m = mixed();
        let cfg = ClampConfig::default();
        let sel = Selector::Heuristic(HeuristicSpec::plain(Heuristic::StrongCycles));
        let trw = clamp_sequence(&m, Method::Trw, &sel, 3, &cfg).unwrap();
        let mf = clamp_sequence(&m, Method::MeanField, &sel, 3, &cfg).unwrap();
        for t in 1..=3 {
            let (a, b) = (trw.estimate_after(t - 1).unwrap(), trw.estimate_after(t).unwrap());
            assert!(b <= a + 1e-6);
            let (a, b) = (mf.estimate_after(t - 1).unwrap(), mf.estimate_after(t).unwrap());
            assert!(b >= a - 1e-9);
        }
    }

    #[test]
    fn greedy_tie_goes_to_lowest_index() {
        let m = PairwiseModel::from_binary(&[0.0, 0.0], &[(0, 1, 2.0)]).unwrap();
        for method in [Method::MeanField, Method::Trw, Method::Exact] {
            assert_eq!(greedy_select(&m, method, &ClampConfig::default()).unwrap().0, 0);
        }
    }

    #[test]
    fn greedy_trw_on_barbell_picks_the_bridge() {
        let (v, _) = greedy_select(&barbell(6.0), Method::Trw, &ClampConfig::default()).unwrap();
        assert_eq!(v, 5);
    }

    #[test]
    fn singleton_basket_matches_its_heuristic() {
        let m = mixed();
        let cfg = ClampConfig::default();
        let h = HeuristicSpec::plain(Heuristic::Mpower);
        let (v, _, table) = pseudo_greedy_select(&m, Method::Trw, &[h], &cfg).unwrap();
        let direct = select_variable(&m, h, &SelectContext::default()).unwrap().var;
        assert_eq!(v, direct);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn pseudo_greedy_is_dominated_by_greedy() {
        let m = mixed();
        let cfg = ClampConfig::default();
        let basket = HeuristicSpec::basket();
        let (_, g) = greedy_select(&m, Method::Trw, &cfg).unwrap();
        let (_, p, _) = pseudo_greedy_select(&m, Method::Trw, &basket, &cfg).unwrap();
        assert!(g <= p + 1e-12);
        let (_, g) = greedy_select(&m, Method::MeanField, &cfg).unwrap();
        let (_, p, _) = pseudo_greedy_select(&m, Method::MeanField, &basket, &cfg).unwrap();
        assert!(g >= p - 1e-12);
        // mixed Bethe ranks by TRW and still reports its own aggregate
        pseudo_greedy_select(&m, Method::Bethe, &basket, &cfg).unwrap();
    }

    #[test]
    fn tre_selectors_run_for_every_method() {
        let m = mixed();
        let sel = Selector::Heuristic(HeuristicSpec::tre(Heuristic::MaxW));
        for method in [Method::MeanField, Method::Bethe, Method::Trw] {
            let r = clamp_sequence(&m, method, &sel, 2, &ClampConfig::default()).unwrap();
            assert_eq!(r.rounds.len(), 2);
            assert_ne!(r.rounds[0].var, r.rounds[1].var);
        }
    }

    #[test]
    fn sequence_selector_and_errors() {
        let m = mixed();
        let cfg = ClampConfig::default();
        let r = clamp_sequence(&m, Method::Exact, &Selector::Sequence(vec![3, 1]), 2, &cfg).unwrap();
        assert_eq!((r.rounds[0].var, r.rounds[1].var), (3, 1));
        assert!(clamp_sequence(&m, Method::Exact, &Selector::Sequence(vec![3, 3]), 2, &cfg).is_err());
        assert!(clamp_sequence(&m, Method::Exact, &Selector::Greedy, 0, &cfg).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let m = cycle(4, 2.0);
        let sel = Selector::Heuristic(HeuristicSpec::plain(Heuristic::MaxW0));
        let mut r = clamp_sequence(&m, Method::Bethe, &sel, 2, &ClampConfig::default()).unwrap();
        r.exact_logz = Some(brute_logz(&m).unwrap());
        let mut buf = Vec::new();
        r.write_csv(&mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "round,var,label_path,child_logz,aggregate_logz,exact_logz,wall_time_ms");
        assert_eq!(lines.len(), 1 + 1 + 2 + 4);
        assert!(lines[7].starts_with("2,"));
        assert!(lines[7].contains(",1-1,"));
    }

    #[test]
    fn recomputed_weights_are_supported() {
        let m = mixed();
        let cfg = ClampConfig {
            rho_policy: RhoPolicy::Recompute,
            ..ClampConfig::default()
        };
        let s = clamp_sum(&m, Method::Trw, 0, &cfg).unwrap();
        assert!(s.aggregate >= brute_logz(&m).unwrap() - 1e-6);
    }
}
