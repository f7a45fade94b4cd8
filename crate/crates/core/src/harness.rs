//! Experiment drivers behind the command-line tool. Each command returns
//! plain rows and writes CSV with a fixed column order; nothing here prints.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::clamping::{clamp_sequence, infer, ClampConfig, ClampReport, Selector};
use crate::error::{Error, Result};
use crate::exact::{exact_logz, BRUTE_FORCE_LIMIT};
use crate::gen::{generate, Family, GenSpec, Topology};
use crate::logspace::log_sum_exp;
use crate::model::{io, PairwiseModel};
use crate::result::{Bound, Method};
use crate::select::HeuristicSpec;

/// Desk-scale run count; `--full` raises it to [`FULL_RUNS`].
pub const DEFAULT_RUNS: usize = 20;
pub const FULL_RUNS: usize = 100;
/// Cap on the number of ordered sequences tried by [`cmd_sequence_search`].
pub const SEQUENCE_BUDGET: usize = 50_000;

/// Where the models of an experiment come from.
#[derive(Clone, Debug)]
pub enum ModelSource {
    File(PathBuf),
    /// Run `r` uses the spec with seed `spec.seed + r`.
    Generated { spec: GenSpec, runs: usize },
}

impl ModelSource {
    pub fn runs(&self) -> usize {
        match self {
            ModelSource::File(_) => 1,
            ModelSource::Generated { runs, .. } => *runs,
        }
    }

    pub fn model(&self, run: usize) -> Result<PairwiseModel> {
        match self {
            ModelSource::File(p) => io::load(p),
            ModelSource::Generated { spec, .. } => generate(&spec.clone().seed(spec.seed.wrapping_add(run as u64))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ModelSource::File(p) => format!("file {}", p.display()),
            ModelSource::Generated { spec, runs } => format!("{spec} runs={runs}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub source: ModelSource,
    pub methods: Vec<Method>,
    pub rounds: usize,
    pub selectors: Vec<Selector>,
    pub cfg: ClampConfig,
    /// Record wall times; off gives byte-identical reruns.
    pub timing: bool,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::input("at least one method is required"));
        }
        if self.rounds > 0 && self.selectors.is_empty() {
            return Err(Error::input("clamping rounds need at least one selector"));
        }
        Ok(())
    }
}

/// Parses a comma-separated selector list. `basket` expands to the ten
/// heuristics; `greedy` and `pseudo-greedy` name the meta-selectors.
pub fn parse_selectors(text: &str) -> Result<Vec<Selector>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.to_ascii_lowercase().as_str() {
            "basket" => out.extend(HeuristicSpec::basket().into_iter().map(Selector::Heuristic)),
            "greedy" => out.push(Selector::Greedy),
            "pseudo-greedy" | "pseudogreedy" | "pseudo" => out.push(Selector::PseudoGreedy(HeuristicSpec::basket())),
            _ => out.push(Selector::Heuristic(part.parse()?)),
        }
    }
    if out.is_empty() {
        return Err(Error::input("empty selector list"));
    }
    Ok(out)
}

pub fn parse_methods(text: &str) -> Result<Vec<Method>> {
    let methods = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(Error::input("empty method list"));
    }
    Ok(methods)
}

/// Summary of one estimator run.
#[derive(Clone, Debug, PartialEq)]
pub struct InferOutcome {
    pub method: Method,
    pub log_z: f64,
    pub bound: Bound,
    pub converged: bool,
    pub iters: usize,
    pub wall_time_ms: f64,
}

impl fmt::Display for InferOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method: {}", self.method)?;
        writeln!(f, "log_z: {}", self.log_z)?;
        writeln!(f, "bound: {}", self.bound)?;
        writeln!(f, "converged: {}", self.converged)?;
        writeln!(f, "iterations: {}", self.iters)?;
        write!(f, "wall_time_ms: {:.3}", self.wall_time_ms)
    }
}

pub fn cmd_infer(model: &PairwiseModel, method: Method, cfg: &ClampConfig) -> Result<InferOutcome> {
    let start = Instant::now();
    let r = infer(model, method, cfg)?;
    Ok(InferOutcome {
        method,
        log_z: r.log_z,
        bound: r.bound,
        converged: r.converged,
        iters: r.iters,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Row `topology,n,w,method,err,err_after_1_clamp`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub topology: Topology,
    pub n: usize,
    pub w: f64,
    pub method: Method,
    pub err: f64,
    pub err_after_1_clamp: f64,
}

fn topology_name(t: Topology) -> &'static str {
    match t {
        Topology::Cycle => "cycle",
        Topology::Complete => "complete",
    }
}

/// Signed errors `Ã - A` on symmetric models over a grid of couplings, before
/// and after clamping variable 0 (every variable is equivalent).
pub fn cmd_sweep(
    topology: Topology,
    n: usize,
    weights: &[f64],
    methods: &[Method],
    cfg: &ClampConfig,
) -> Result<Vec<SweepRow>> {
    if n > 12 {
        return Err(Error::Capacity(format!("sweeps use brute force and are limited to n <= 12, got {n}")));
    }
    let cells: Vec<(f64, Method)> = weights
        .iter()
        .flat_map(|&w| methods.iter().map(move |&m| (w, m)))
        .collect();
    cells
        .par_iter()
        .map(|&(w, method)| {
            let model = generate(&GenSpec::new(Family::Symmetric { topology, n, w }))?;
            let a = exact_logz(&model)?;
            let root = infer(&model, method, cfg)?.log_z;
            let sel = Selector::Sequence(vec![0]);
            let clamped = clamp_sequence(&model, method, &sel, 1, cfg)?.final_estimate();
            Ok(SweepRow {
                topology,
                n,
                w,
                method,
                err: root - a,
                err_after_1_clamp: clamped - a,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["topology", "n", "w", "method", "err", "err_after_1_clamp"])?;
    for r in rows {
        w.write_record([
            topology_name(r.topology).to_string(),
            r.n.to_string(),
            r.w.to_string(),
            r.method.to_string(),
            r.err.to_string(),
            r.err_after_1_clamp.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Row `run,method,selector,round,err,abs_err,time_ms`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClampRow {
    pub run: usize,
    pub method: Method,
    pub selector: String,
    pub round: usize,
    pub err: f64,
    pub abs_err: f64,
    /// Cumulative time up to and including this round.
    pub time_ms: f64,
}

/// Mean curve of one `(method, selector)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanRow {
    pub method: Method,
    pub selector: String,
    pub round: usize,
    pub mean_err: f64,
    pub mean_abs_err: f64,
    pub mean_time_ms: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, Default)]
pub struct ClampExperiment {
    pub rows: Vec<ClampRow>,
    pub means: Vec<MeanRow>,
    pub fallbacks: usize,
}

fn report_rows(run: usize, report: &ClampReport, exact: f64, rounds: usize, timing: bool) -> Vec<ClampRow> {
    let mut t = report.root_wall_time;
    (0..=rounds)
        .map(|k| {
            if k > 0 {
                t += report.rounds.get(k - 1).map_or(0.0, |r| r.wall_time);
            }
            // once every variable is clamped the estimate stays put
            let est = report.estimate_after(k).unwrap_or_else(|| report.final_estimate());
            ClampRow {
                run,
                method: report.method,
                selector: report.selector.clone(),
                round: k,
                err: est - exact,
                abs_err: (est - exact).abs(),
                time_ms: if timing { t * 1e3 } else { 0.0 },
            }
        })
        .collect()
}

/// Error against the exact value after each round, per run, method and
/// selector. `best` and `worst` rows pick, per run and round, the plain
/// heuristic selectors with the smallest and largest absolute error.
pub fn cmd_clamp_experiment(spec: &ExperimentSpec) -> Result<ClampExperiment> {
    spec.validate()?;
    let runs: Vec<Result<(Vec<ClampRow>, usize)>> = (0..spec.source.runs())
        .into_par_iter()
        .map(|run| {
            let model = spec.source.model(run)?;
            let exact = exact_logz(&model)?;
            let mut rows = Vec::new();
            let mut fallbacks = 0;
            for &method in &spec.methods {
                if spec.rounds == 0 {
                    let start = Instant::now();
                    let est = infer(&model, method, &spec.cfg)?.log_z;
                    let ms = if spec.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                    rows.push(ClampRow {
                        run,
                        method,
                        selector: "none".into(),
                        round: 0,
                        err: est - exact,
                        abs_err: (est - exact).abs(),
                        time_ms: ms,
                    });
                    continue;
                }
                let mut plain: Vec<Vec<ClampRow>> = Vec::new();
                for sel in &spec.selectors {
                    let report = clamp_sequence(&model, method, sel, spec.rounds, &spec.cfg)?;
                    fallbacks += report.rounds.iter().filter(|r| r.fallback).count();
                    let r = report_rows(run, &report, exact, spec.rounds, spec.timing);
                    if matches!(sel, Selector::Heuristic(_)) {
                        plain.push(r.clone());
                    }
                    rows.extend(r);
                }
                if plain.len() > 1 {
                    for k in 0..=spec.rounds {
                        let at: Vec<&ClampRow> = plain.iter().map(|r| &r[k]).collect();
                        let best = at.iter().min_by(|a, b| a.abs_err.total_cmp(&b.abs_err)).expect("nonempty");
                        let worst = at.iter().max_by(|a, b| a.abs_err.total_cmp(&b.abs_err)).expect("nonempty");
                        for (name, r) in [("best", best), ("worst", worst)] {
                            rows.push(ClampRow {
                                selector: name.into(),
                                ..(*r).clone()
                            });
                        }
                    }
                }
            }
            Ok((rows, fallbacks))
        })
        .collect();
    let mut out = ClampExperiment::default();
    for r in runs {
        let (rows, fb) = r?;
        out.rows.extend(rows);
        out.fallbacks += fb;
    }
    out.means = mean_curves(&out.rows);
    Ok(out)
}

fn method_order(m: Method) -> usize {
    Method::ALL.iter().position(|&x| x == m).expect("known method")
}

fn mean_curves(rows: &[ClampRow]) -> Vec<MeanRow> {
    // first-seen order of selectors keeps the output stable
    let mut selector_order: Vec<String> = Vec::new();
    for r in rows {
        if !selector_order.contains(&r.selector) {
            selector_order.push(r.selector.clone());
        }
    }
    let mut acc: BTreeMap<(usize, usize, usize), (f64, f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let s = selector_order.iter().position(|x| *x == r.selector).expect("seen");
        let e = acc.entry((method_order(r.method), s, r.round)).or_default();
        e.0 += r.err;
        e.1 += r.abs_err;
        e.2 += r.time_ms;
        e.3 += 1;
    }
    acc.into_iter()
        .map(|((m, s, round), (err, abs, t, n))| MeanRow {
            method: Method::ALL[m],
            selector: selector_order[s].clone(),
            round,
            mean_err: err / n as f64,
            mean_abs_err: abs / n as f64,
            mean_time_ms: t / n as f64,
            runs: n,
        })
        .collect()
}

pub fn write_clamp_csv<W: Write>(rows: &[ClampRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "method", "selector", "round", "err", "abs_err", "time_ms"])?;
    for r in rows {
        w.write_record([
            r.run.to_string(),
            r.method.to_string(),
            r.selector.clone(),
            r.round.to_string(),
            r.err.to_string(),
            r.abs_err.to_string(),
            format!("{:.3}", r.time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mean_csv<W: Write>(rows: &[MeanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "selector", "round", "mean_err", "mean_abs_err", "mean_time_ms", "runs"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.selector.clone(),
            r.round.to_string(),
            r.mean_err.to_string(),
            r.mean_abs_err.to_string(),
            format!("{:.3}", r.mean_time_ms),
            r.runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes())
}

/// Re-derives `abs_err` from `err` on every row of a clamp-experiment CSV.
/// Lines starting with `#` are provenance comments.
pub fn verify_clamp_csv(text: &str) -> Result<usize> {
    let mut rdr = reader(text);
    let mut n = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: k + 2,
                    msg: format!("column {i} is not a number"),
                })
        };
        let (err, abs) = (parse(4)?, parse(5)?);
        if abs != err.abs() {
            return Err(Error::Parse {
                line: k + 2,
                msg: format!("abs_err {abs} does not match err {err}"),
            });
        }
        n += 1;
    }
    Ok(n)
}

/// Checks that every round of a clamp report CSV aggregates its children.
pub fn verify_report_csv(text: &str) -> Result<usize> {
    let mut rdr = reader(text);
    let mut rounds: BTreeMap<usize, (Vec<f64>, f64)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::input(format!("column {i} is not a number")))
        };
        let round: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::input("bad round"))?;
        let e = rounds.entry(round).or_insert_with(|| (Vec::new(), num(4).unwrap_or(f64::NAN)));
        e.0.push(num(3)?);
    }
    for (round, (children, agg)) in &rounds {
        if (log_sum_exp(children) - agg).abs() > 1e-9 * agg.abs().max(1.0) {
            return Err(Error::input(format!("round {round} aggregate does not match its children")));
        }
    }
    Ok(rounds.len())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSearch {
    pub method: Method,
    pub greedy_sequence: Vec<usize>,
    pub greedy_value: f64,
    pub best_sequence: Vec<usize>,
    pub best_value: f64,
    /// Improvement of the best sequence over greedy in the bound direction;
    /// never negative.
    pub gap: f64,
    pub sequences_tried: usize,
}

fn ordered_sequences(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in ordered_sequences(&rest, k - 1) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

/// Compares iterated greedy with the best of all ordered clamp sequences of
/// length `k ≤ 3`. Only methods with a known bound direction qualify.
pub fn cmd_sequence_search(model: &PairwiseModel, method: Method, k: usize, cfg: &ClampConfig) -> Result<SequenceSearch> {
    if k == 0 || k > 3 {
        return Err(Error::input(format!("sequence length must be 1..=3, got {k}")));
    }
    if k > model.n() {
        return Err(Error::input(format!("cannot clamp {k} of {} variables", model.n())));
    }
    let maximize = match method {
        Method::MeanField => true,
        Method::Trw => false,
        Method::Exact => true,
        Method::Bethe => {
            if model.is_binary() && model.balance_certificate(0.0)?.is_balanced() {
                true
            } else {
                return Err(Error::Unsupported(
                    "Bethe without a balance certificate has no bound direction to search".into(),
                ));
            }
        }
    };
    let count: usize = (0..k).map(|i| model.n() - i).product();
    if count > SEQUENCE_BUDGET {
        return Err(Error::Capacity(format!(
            "{count} ordered sequences exceed the budget of {SEQUENCE_BUDGET}"
        )));
    }
    let greedy = clamp_sequence(model, method, &Selector::Greedy, k, cfg)?;
    let greedy_sequence: Vec<usize> = greedy.rounds.iter().map(|r| r.var).collect();
    let greedy_value = greedy.final_estimate();

    let sequences = ordered_sequences(model.names(), k);
    let values: Vec<f64> = sequences
        .par_iter()
        .map(|s| Ok(clamp_sequence(model, method, &Selector::Sequence(s.clone()), k, cfg)?.final_estimate()))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for i in 1..values.len() {
        let better = if maximize { values[i] > values[best] } else { values[i] < values[best] };
        if better {
            best = i;
        }
    }
    let best_value = values[best];
    let gap = if maximize { best_value - greedy_value } else { greedy_value - best_value };
    Ok(SequenceSearch {
        method,
        greedy_sequence,
        greedy_value,
        best_sequence: sequences[best].clone(),
        best_value,
        gap,
        sequences_tried: sequences.len(),
    })
}

/// Signed error histogram row `round,bin_lo,bin_hi,count`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub round: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    /// Signed errors per round, in run order.
    pub errors: Vec<Vec<f64>>,
}

impl Histogram {
    /// Fraction of runs with a positive error at `round`.
    pub fn positive_fraction(&self, round: usize) -> Option<f64> {
        let e = self.errors.get(round)?;
        if e.is_empty() {
            return None;
        }
        Some(e.iter().filter(|&&x| x > 0.0).count() as f64 / e.len() as f64)
    }
}

/// Bins of the signed Bethe error `Ã_B - A` at rounds `0..=2`.
pub fn cmd_histogram(source: &ModelSource, selector: &Selector, bin_width: f64, cfg: &ClampConfig) -> Result<Histogram> {
    if !(bin_width > 0.0) {
        return Err(Error::input("bin width must be positive"));
    }
    let per_run: Vec<Vec<f64>> = (0..source.runs())
        .into_par_iter()
        .map(|run| {
            let model = source.model(run)?;
            let exact = exact_logz(&model)?;
            let rounds = 2.min(model.n());
            let report = clamp_sequence(&model, Method::Bethe, selector, rounds.max(1), cfg)?;
            Ok((0..=2)
                .map(|k| report.estimate_after(k).unwrap_or_else(|| report.final_estimate()) - exact)
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut hist = Histogram {
        bins: Vec::new(),
        errors: vec![Vec::new(); 3],
    };
    for run in &per_run {
        for (k, &e) in run.iter().enumerate() {
            hist.errors[k].push(e);
        }
    }
    for (round, errs) in hist.errors.iter().enumerate() {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &e in errs {
            *counts.entry((e / bin_width).floor() as i64).or_default() += 1;
        }
        for (b, count) in counts {
            hist.bins.push(HistogramBin {
                round,
                lo: b as f64 * bin_width,
                hi: (b + 1) as f64 * bin_width,
                count,
            });
        }
    }
    Ok(hist)
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "bin_lo", "bin_hi", "count"])?;
    for b in bins {
        w.write_record([b.round.to_string(), b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Brute-force-sized check used by commands that promise exact baselines.
pub fn brute_force_feasible(model: &PairwiseModel) -> bool {
    model.state_space().is_some_and(|s| s <= BRUTE_FORCE_LIMIT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::Heuristic;

    fn grid_source(runs: usize, w: (f64, f64)) -> ModelSource {
        ModelSource::Generated {
            spec: GenSpec::new(Family::Grid {
                rows: 3,
                cols: 3,
                toroidal: true,
            })
            .w(w.0, w.1)
            .seed(11),
            runs,
        }
    }

    #[test]
    fn selector_lists() {
        assert_eq!(parse_selectors("basket").unwrap().len(), 10);
        let s = parse_selectors("maxW, TRE-Mpower,greedy,pseudo").unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[1], Selector::Heuristic(HeuristicSpec::tre(Heuristic::Mpower)));
        assert!(parse_selectors("nope").is_err());
        assert_eq!(parse_methods("mf,trw").unwrap(), vec![Method::MeanField, Method::Trw]);
    }

    #[test]
    fn sweep_limits_and_symmetry() {
        let cfg = ClampConfig::default();
        let rows = cmd_sweep(Topology::Complete, 5, &[12.0], &[Method::MeanField], &cfg).unwrap();
        assert!((rows[0].err + 2f64.ln()).abs() < 0.02);
        let rows = cmd_sweep(Topology::Cycle, 4, &[-3.0, 3.0], &[Method::Bethe], &cfg).unwrap();
        assert!((rows[0].err - rows[1].err).abs() < 1e-6);
        assert!(matches!(
            cmd_sweep(Topology::Cycle, 13, &[1.0], &[Method::Bethe], &cfg),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn round_zero_matches_infer() {
        let spec = ExperimentSpec {
            source: grid_source(2, (0.0, 6.0)),
            methods: vec![Method::Trw, Method::MeanField],
            rounds: 2,
            selectors: parse_selectors("maxW,strongCycles").unwrap(),
            cfg: ClampConfig::default(),
            timing: false,
        };
        let exp = cmd_clamp_experiment(&spec).unwrap();
        let model = spec.source.model(1).unwrap();
        let a = exact_logz(&model).unwrap();
        let direct = cmd_infer(&model, Method::Trw, &spec.cfg).unwrap().log_z;
        let row = exp
            .rows
            .iter()
            .find(|r| r.run == 1 && r.method == Method::Trw && r.round == 0)
            .unwrap();
        assert_eq!(row.err, direct - a);
        // 2 runs × 2 methods × (2 selectors + best + worst) × 3 rounds
        assert_eq!(exp.rows.len(), 2 * 2 * 4 * 3);
        let mut buf = Vec::new();
        write_clamp_csv(&exp.rows, &mut buf).unwrap();
        assert_eq!(verify_clamp_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), exp.rows.len());
        let again = cmd_clamp_experiment(&spec).unwrap();
        let mut buf2 = Vec::new();
        write_clamp_csv(&again.rows, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn report_csv_is_self_consistent() {
        let model = generate(&GenSpec::new(Family::Complete { n: 5 }).seed(2)).unwrap();
        let sel = Selector::Heuristic(HeuristicSpec::plain(Heuristic::MaxW));
        let r = clamp_sequence(&model, Method::Bethe, &sel, 3, &ClampConfig::default()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf, false).unwrap();
        assert_eq!(verify_report_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), 4);
    }

    #[test]
    fn sequence_search_basics() {
        let cfg = ClampConfig::default();
        let m = generate(&GenSpec::new(Family::Complete { n: 5 }).seed(3)).unwrap();
        let one = cmd_sequence_search(&m, Method::Trw, 1, &cfg).unwrap();
        assert!(one.gap.abs() < 1e-9);
        let pair = PairwiseModel::from_binary(&[0.2, -0.1], &[(0, 1, 3.0)]).unwrap();
        let a = exact_logz(&pair).unwrap();
        let two = cmd_sequence_search(&pair, Method::MeanField, 2, &cfg).unwrap();
        assert!((two.best_value - a).abs() < 1e-10 && (two.greedy_value - a).abs() < 1e-10);
        assert!(cmd_sequence_search(&m, Method::Trw, 4, &cfg).is_err());
    }

    #[test]
    fn empty_histogram() {
        let h = cmd_histogram(&grid_source(0, (-6.0, 6.0)), &Selector::Greedy, 0.1, &ClampConfig::default()).unwrap();
        assert!(h.bins.is_empty());
        let mut buf = Vec::new();
        write_histogram_csv(&h.bins, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "round,bin_lo,bin_hi,count\n");
    }
}
