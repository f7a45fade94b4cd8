use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use clampmrf::clamping::{ClampConfig, RhoPolicy, Selector};
use clampmrf::gen::{generate, Family, GenSpec, Topology};
use clampmrf::harness::{
    cmd_clamp_experiment, cmd_histogram, cmd_infer, cmd_sequence_search, cmd_sweep, parse_methods,
    parse_selectors, write_clamp_csv, write_histogram_csv, write_mean_csv, write_sweep_csv, ExperimentSpec,
    ModelSource, DEFAULT_RUNS, FULL_RUNS,
};
use clampmrf::model::io as model_io;
use clampmrf::{Error, Method, PairwiseModel};

#[derive(Parser)]
#[command(name = "clampmrf", version, about = "Partition-function estimation with clamping for pairwise MRFs")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one estimator on one model.
    Infer {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "bethe")]
        method: Method,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Error of each method on symmetric models across a coupling grid.
    Sweep {
        #[arg(long, value_enum, default_value = "complete")]
        topology: TopologyArg,
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// `lo:hi:step` or a comma-separated list.
        #[arg(long, default_value = "-12:12:1")]
        w_grid: String,
        #[arg(long, default_value = "mf,bethe,trw")]
        methods: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Error against exact values after each clamping round.
    Clamp {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "mf,bethe,trw")]
        methods: String,
        /// Comma-separated; `basket`, `greedy` and `pseudo-greedy` are accepted.
        #[arg(long, default_value = "basket,pseudo-greedy")]
        selector: String,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        /// Also write per-round mean curves here.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        runs: RunArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Best ordered clamp sequence versus iterated greedy.
    Seqsearch {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "trw")]
        method: Method,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Histogram of signed Bethe errors at rounds 0, 1 and 2.
    Hist {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "maxW")]
        selector: String,
        #[arg(long, default_value_t = 0.1)]
        bin_width: f64,
        #[command(flatten)]
        runs: RunArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a generated model to a file (`.uai` selects the UAI format).
    Gen {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    /// Toroidal grid, `--n` per side unless `--rows`/`--cols` are given.
    Grid,
    Erdos,
    Regular,
    Complete,
    /// Cycle; needs `--w-uniform`.
    Cycle,
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Cycle,
    Complete,
}

#[derive(Args)]
struct ModelArgs {
    /// UAI or native model file.
    #[arg(long, conflicts_with = "family")]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Grid without wrap-around edges.
    #[arg(long)]
    open: bool,
    /// Erdős–Rényi edge probability (default: average degree 4).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 4)]
    degree: usize,
    #[arg(long, default_value = "-2,2", value_parser = parse_range, allow_hyphen_values = true)]
    theta_range: (f64, f64),
    #[arg(long, default_value = "-6,6", value_parser = parse_range, allow_hyphen_values = true)]
    w_range: (f64, f64),
    /// Every coupling equal to this and no unary fields.
    #[arg(long, allow_hyphen_values = true)]
    w_uniform: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// Number of generated models (default 20).
    #[arg(long)]
    runs: Option<usize>,
    /// Run the full 100-model suite.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct SolverArgs {
    /// Independent restarts for mean field and Bethe.
    #[arg(long)]
    restarts: Option<usize>,
    /// Fresh tree weights for every clamped child instead of the parent's.
    #[arg(long)]
    rho_recompute: bool,
}

#[derive(Args)]
struct OutputArgs {
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write zero for all timings so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got {s:?}"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    if lo > hi {
        return Err(format!("range {lo},{hi} is not ordered"));
    }
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    if let Some((lo, rest)) = s.split_once(':') {
        let (hi, step) = rest.split_once(':').ok_or_else(|| anyhow!("expected lo:hi:step"))?;
        let (lo, hi, step): (f64, f64, f64) = (lo.parse()?, hi.parse()?, step.parse()?);
        if !(step > 0.0) || lo > hi {
            bail!("grid {s} is empty");
        }
        let k = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=k).map(|i| lo + i as f64 * step).collect());
    }
    s.split(',').map(|x| Ok(x.trim().parse()?)).collect()
}

impl ModelArgs {
    fn spec(&self) -> Result<GenSpec> {
        let family = self.family.ok_or_else(|| anyhow!("either --model or --family is required"))?;
        let n = self.n;
        let family = match (family, self.w_uniform) {
            (FamilyArg::Complete, Some(w)) => Family::Symmetric {
                topology: Topology::Complete,
                n,
                w,
            },
            (FamilyArg::Cycle, Some(w)) => Family::Symmetric {
                topology: Topology::Cycle,
                n,
                w,
            },
            (FamilyArg::Cycle, None) => bail!("--family cycle needs --w-uniform"),
            (_, Some(_)) => bail!("--w-uniform applies to the complete and cycle families"),
            (FamilyArg::Grid, None) => Family::Grid {
                rows: self.rows.unwrap_or(n),
                cols: self.cols.unwrap_or(n),
                toroidal: !self.open,
            },
            (FamilyArg::Erdos, None) => Family::Erdos { n, p: self.p },
            (FamilyArg::Regular, None) => Family::Regular { n, d: self.degree },
            (FamilyArg::Complete, None) => Family::Complete { n },
        };
        Ok(GenSpec {
            family,
            theta_range: self.theta_range,
            w_range: self.w_range,
            seed: self.seed,
        })
    }

    fn source(&self, runs: usize) -> Result<ModelSource> {
        Ok(match &self.model {
            Some(p) => ModelSource::File(p.clone()),
            None => ModelSource::Generated {
                spec: self.spec()?,
                runs,
            },
        })
    }

    fn load(&self) -> Result<PairwiseModel> {
        match &self.model {
            Some(p) => model_io::load(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(generate(&self.spec()?)?),
        }
    }
}

impl RunArgs {
    fn count(&self) -> usize {
        if self.full {
            eprintln!("warning: --full runs {FULL_RUNS} models per configuration and may take a long time");
            FULL_RUNS
        } else {
            self.runs.unwrap_or(DEFAULT_RUNS)
        }
    }
}

impl SolverArgs {
    fn config(&self, seed: u64) -> ClampConfig {
        let mut cfg = ClampConfig::default().with_seed(seed);
        if let Some(r) = self.restarts {
            cfg.mf.restarts = r;
            cfg.bethe.restarts = r;
        }
        if self.rho_recompute {
            cfg.rho_policy = RhoPolicy::Recompute;
        }
        cfg
    }
}

impl OutputArgs {
    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn single_selector(text: &str) -> Result<Selector> {
    let mut v = parse_selectors(text)?;
    if v.len() != 1 {
        bail!("exactly one selector expected, got {}", v.len());
    }
    Ok(v.remove(0))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    match cli.command {
        Command::Infer { model, method, solver } => {
            let m = model.load()?;
            println!("{}", cmd_infer(&m, method, &solver.config(model.seed))?);
        }
        Command::Sweep {
            topology,
            n,
            w_grid,
            methods,
            solver,
            output,
        } => {
            let topology = match topology {
                TopologyArg::Cycle => Topology::Cycle,
                TopologyArg::Complete => Topology::Complete,
            };
            let rows = cmd_sweep(topology, n, &parse_grid(&w_grid)?, &parse_methods(&methods)?, &solver.config(0))?;
            let mut out = output.writer()?;
            writeln!(out, "# sweep topology={topology:?} n={n} w={w_grid}")?;
            write_sweep_csv(&rows, &mut out)?;
            out.flush()?;
        }
        Command::Clamp {
            model,
            methods,
            selector,
            rounds,
            summary,
            runs,
            solver,
            output,
        } => {
            let source = model.source(runs.count())?;
            let spec = ExperimentSpec {
                source,
                methods: parse_methods(&methods)?,
                rounds,
                selectors: parse_selectors(&selector)?,
                cfg: solver.config(model.seed),
                timing: !output.no_timing,
            };
            let exp = cmd_clamp_experiment(&spec)?;
            let mut out = output.writer()?;
            writeln!(out, "# {}", spec.source.describe())?;
            write_clamp_csv(&exp.rows, &mut out)?;
            out.flush()?;
            if let Some(path) = summary {
                let mut f = BufWriter::new(File::create(&path)?);
                writeln!(f, "# {}", spec.source.describe())?;
                write_mean_csv(&exp.means, &mut f)?;
                f.flush()?;
            }
            if exp.fallbacks > 0 {
                eprintln!("note: {} selections fell back to unstripped maxW", exp.fallbacks);
            }
        }
        Command::Seqsearch {
            model,
            method,
            rounds,
            solver,
        } => {
            let m = model.load()?;
            let s = cmd_sequence_search(&m, method, rounds, &solver.config(model.seed))?;
            println!("method: {}", s.method);
            println!("sequences: {}", s.sequences_tried);
            println!("greedy: {:?} {}", s.greedy_sequence, s.greedy_value);
            println!("best: {:?} {}", s.best_sequence, s.best_value);
            println!("gap: {}", s.gap);
        }
        Command::Hist {
            model,
            selector,
            bin_width,
            runs,
            solver,
            output,
        } => {
            let source = model.source(runs.count())?;
            let h = cmd_histogram(&source, &single_selector(&selector)?, bin_width, &solver.config(model.seed))?;
            let mut out = output.writer()?;
            writeln!(out, "# {}", source.describe())?;
            write_histogram_csv(&h.bins, &mut out)?;
            out.flush()?;
            if let Some(f) = h.positive_fraction(0) {
                eprintln!("positive error fraction at round 0: {f:.3}");
            }
        }
        Command::Gen { model, out } => {
            let m = model.load()?;
            model_io::save(&m, &out)?;
            eprintln!("wrote {} variables and {} edges to {}", m.n(), m.num_edges(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Capacity(_)) => ExitCode::from(3),
                Some(Error::Input(_) | Error::Parse { .. }) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
