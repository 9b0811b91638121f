mod run;

use std::hint::black_box;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use patrolswitch::evaluator::{loss_adjoint, steals_csv, summary, EvalMode, Evaluator};
use patrolswitch::generators::{apply_change, gen_building, gen_city, ChangeKind, ChangeSpec};
use patrolswitch::graph::{parse_graph_file, save_graph, validate, validate_file};
use patrolswitch::hole::{estimate_hole, estimate_hole_with, pairs_csv, report_json, HoleOptions};
use patrolswitch::rng::derive_seed;
use patrolswitch::sim::{
    kappa_runs_csv, simulate_kappa_switch, simulate_static, simulate_switch, AttackPolicy, AttackSpec, SimStats,
};
use patrolswitch::strategy::{random_init, save_strategy};
use patrolswitch::switcher::mitigation_report;
use patrolswitch::synthesizer::{cold_trials, optimize, synthesize, trace_csv, warm_trials, SynthConfig, SynthResult};
use patrolswitch::{AugmentedVertex, ChangingEnvironment, PatrollingGraph, RegularStrategy};
use run::{bad_input, graph_arg, out_dir, strategy_arg, Classify, CmdResult, Run};
use serde::Serialize;
use serde_json::{json, Value};

/// Synthesis, evaluation and switching of randomized patrolling strategies on
/// changing graphs.
///
/// GRAPH and STRATEGY arguments are JSON files or names of built-in
/// scenarios: tri_g1, tri_g2, building1, building2, building3, city15
/// (graphs) and tri_sigma1, tri_sigma2 (strategies).
///
/// Exit codes: 0 success, 2 usage or input error, 3 computation failure.
#[derive(Parser)]
#[command(name = "patrolswitch", version)]
struct Cli {
    /// Worker threads for parallel components [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Check a graph file and report every violated invariant
    Validate { graph: String },
    /// Generate a scenario graph
    #[command(subcommand)]
    Gen(Gen),
    /// Synthesize a strategy by gradient descent from random starts
    Synth(SynthCmd),
    /// Evaluate a strategy: attacker and defender values, steal table
    Eval(EvalCmd),
    /// Warm-start synthesis on a changed graph from a strategy for the old one
    Adapt(AdaptCmd),
    /// Upper-bound the security hole of switching between two strategies
    Hole(HoleCmd),
    /// Recommend a randomized switch probability for a hole budget
    Mitigate(MitigateCmd),
    /// Monte-Carlo simulation of attacks, with or without a switch
    Simulate(SimulateCmd),
    /// Time forward pass, adjoint pass and optimization steps
    Bench(BenchCmd),
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Gen {
    /// Office building with the given number of floors
    Building {
        #[arg(long, default_value_t = 1)]
        floors: usize,
        #[command(flatten)]
        out: GenOut,
    },
    /// Random strongly connected city map where every vertex is a target
    City {
        #[arg(long, default_value_t = 15)]
        targets: usize,
        #[arg(long, default_value_t = 72)]
        edges: usize,
        #[arg(long, default_value_t = 80.0)]
        cost_lo: f64,
        #[arg(long, default_value_t = 100.0)]
        cost_hi: f64,
        #[arg(long, default_value_t = 64)]
        attack_time: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: GenOut,
    },
    /// Apply a seeded change to a graph
    Change {
        graph: String,
        #[arg(long, value_enum, default_value_t = Kind::Utility)]
        kind: Kind,
        /// Change size in percent
        #[arg(long, default_value_t = 5.0)]
        cs: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: GenOut,
    },
}

#[derive(Args, Serialize)]
struct GenOut {
    /// Output file; a manifest is written next to it [default: stdout]
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum Kind {
    Utility,
    EdgeLength,
    EdgeRemoval,
}

impl From<Kind> for ChangeKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Utility => ChangeKind::Utility,
            Kind::EdgeLength => ChangeKind::EdgeLength,
            Kind::EdgeRemoval => ChangeKind::EdgeRemoval,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum Family {
    Building,
    City,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum Mode {
    AllSupport,
    BestInitial,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::AllSupport => EvalMode::AllSupport,
            Mode::BestInitial => EvalMode::BestInitial,
        }
    }
}

/// Optimizer settings. Unset values come from the chosen family.
#[derive(Args, Serialize)]
struct SynthFlags {
    /// Hyperparameter family supplying defaults
    #[arg(long, value_enum, default_value_t = Family::Building)]
    family: Family,
    /// Memory size [default: 1, or that of the starting strategy]
    #[arg(long)]
    mem: Option<usize>,
    /// Optimization steps per trial [default: 100]
    #[arg(long)]
    steps: Option<usize>,
    /// Independent trials [default: 1]
    #[arg(long)]
    trials: Option<usize>,
    /// Adam learning rate [default: 0.15 building, 0.07 city]
    #[arg(long)]
    lr: Option<f64>,
    /// Loss window around the maximal steal [default: 0.1 building, 0.025 city]
    #[arg(long)]
    eps_loss: Option<f64>,
    /// Loss exponent [default: 3]
    #[arg(long)]
    pwr: Option<u32>,
    /// Probabilities below this are cut before evaluation [default: 0.001]
    #[arg(long)]
    threshold: Option<f64>,
    /// Initial gradient-noise standard deviation [default: 0.05]
    #[arg(long)]
    noise0: Option<f64>,
    /// Base seed; trial i uses a seed derived from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SynthFlags {
    fn config(&self, mem: usize) -> SynthConfig {
        let base = match self.family {
            Family::Building => SynthConfig::building(),
            Family::City => SynthConfig::city(),
        };
        SynthConfig {
            steps: self.steps.unwrap_or(base.steps),
            trials: self.trials.unwrap_or(base.trials),
            lr: self.lr.unwrap_or(base.lr),
            eps_loss: self.eps_loss.unwrap_or(base.eps_loss),
            pwr: self.pwr.unwrap_or(base.pwr),
            threshold: self.threshold.unwrap_or(base.threshold),
            noise0: self.noise0.unwrap_or(base.noise0),
            seed: self.seed,
            mem_size: mem,
            ..base
        }
    }

    fn trial_seeds(&self, cfg: &SynthConfig) -> Vec<u64> {
        (0..cfg.trials as u64).map(|i| derive_seed(cfg.seed, i)).collect()
    }
}

#[derive(Args, Serialize)]
struct OutDir {
    /// Directory for artifacts and the run manifest [default: print only]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SynthCmd {
    graph: String,
    #[command(flatten)]
    flags: SynthFlags,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct EvalCmd {
    graph: String,
    strategy: String,
    #[arg(long, value_enum, default_value_t = Mode::AllSupport)]
    mode: Mode,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct AdaptCmd {
    g1: String,
    g2: String,
    sigma1: String,
    /// Also run cold-start trials with the same settings for comparison
    #[arg(long)]
    baseline: bool,
    #[command(flatten)]
    flags: SynthFlags,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct Pair {
    g1: String,
    g2: String,
    sigma1: String,
    sigma2: String,
}

#[derive(Args, Serialize)]
struct HoleCmd {
    #[command(flatten)]
    pair: Pair,
    /// Answer catch queries by direct search instead of the bucket oracle
    #[arg(long)]
    naive: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct MitigateCmd {
    #[command(flatten)]
    pair: Pair,
    /// Largest acceptable hole bound
    #[arg(long)]
    hole_budget: f64,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct SimulateCmd {
    graph: String,
    strategy: String,
    /// Changed graph; enables the switch simulation
    #[arg(long, requires = "sigma2")]
    g2: Option<String>,
    /// Strategy played on the changed graph
    #[arg(long, requires = "g2")]
    sigma2: Option<String>,
    /// Randomized switch probability per vertex arrival [default: planned switch]
    #[arg(long, requires = "g2")]
    kappa: Option<f64>,
    /// Source of the attacked edge as VERTEX:MEM [default: worst edge]
    #[arg(long, value_name = "VERTEX:MEM", requires_all = ["to", "target"])]
    from: Option<String>,
    /// Destination of the attacked edge as VERTEX:MEM
    #[arg(long, value_name = "VERTEX:MEM", requires = "from")]
    to: Option<String>,
    /// Attacked target vertex
    #[arg(long, requires = "from")]
    target: Option<String>,
    /// Attack start offset into the edge traversal
    #[arg(long, default_value_t = 0)]
    delta: u32,
    /// Change time relative to the attack start [default: worst for the pair]
    #[arg(long)]
    delta_t: Option<u32>,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct BenchCmd {
    /// Graphs to time
    #[arg(required = true)]
    graphs: Vec<String>,
    #[arg(long, default_value_t = 1)]
    mem: usize,
    /// Optimization steps timed per graph
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Repetitions of the forward and adjoint timings; the median is reported
    #[arg(long, default_value_t = 7)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = Family::City)]
    family: Family,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutDir,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(run::EXIT_INPUT);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("global pool is set once");
    }
    let config = serde_json::to_value(&cli.cmd).expect("arguments serialize");
    let res = match cli.cmd {
        Command::Validate { graph } => cmd_validate(&graph),
        Command::Gen(g) => cmd_gen(g, config),
        Command::Synth(c) => cmd_synth(c, config),
        Command::Eval(c) => cmd_eval(c, config),
        Command::Adapt(c) => cmd_adapt(c, config),
        Command::Hole(c) => cmd_hole(c, config),
        Command::Mitigate(c) => cmd_mitigate(c, config),
        Command::Simulate(c) => cmd_simulate(c, config),
        Command::Bench(c) => cmd_bench(c, config),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn print_json(v: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(&run::pretty(v));
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("result serializes")
}

fn cmd_validate(arg: &str) -> CmdResult {
    let p = std::path::Path::new(arg);
    let report = if p.is_file() {
        let bytes = std::fs::read(p).input()?;
        validate_file(&parse_graph_file(&bytes).input()?)
    } else {
        validate(&graph_arg(arg)?)
    };
    print_json(&to_value(&report));
    if report.is_valid() {
        Ok(())
    } else {
        bad_input(format!("{arg}: {} violation(s)", report.violations.len()))
    }
}

fn cmd_gen(g: Gen, config: Value) -> CmdResult {
    let (graph, out, seeds, input) = match g {
        Gen::Building { floors, out } => (gen_building(floors).input()?, out, vec![], None),
        Gen::City { targets, edges, cost_lo, cost_hi, attack_time, seed, out } => {
            (gen_city(targets, edges, cost_lo, cost_hi, attack_time, seed).input()?, out, vec![seed], None)
        }
        Gen::Change { graph, kind, cs, seed, out } => {
            let g = graph_arg(&graph)?;
            (apply_change(&g, &ChangeSpec::new(kind.into(), cs, seed)).input()?, out, vec![seed], Some(graph))
        }
    };
    let bytes = save_graph(&graph);
    let Some(path) = out.output else {
        let _ = std::io::stdout().lock().write_all(&bytes);
        return Ok(());
    };
    let dir = path.parent().map(|p| p.to_path_buf()).filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| PathBuf::from("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "graph.json".into());
    let mut run = Run::new("gen", config, out_dir(&Some(dir))?);
    run.manifest.seeds = seeds;
    run.manifest.inputs.extend(input);
    run.write(&name, &bytes)?;
    run.finish_as(&format!("{name}.manifest.json"))
}

fn trials_json(seeds: &[u64], dvals: &[f64], holes: Option<&[f64]>, norm: f64) -> Value {
    let rows: Vec<Value> = seeds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = json!({ "seed": s, "dval": dvals[i] * norm });
            if let Some(h) = holes {
                r["hole_ub"] = json!(h[i] * norm);
            }
            r
        })
        .collect();
    Value::Array(rows)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn cmd_synth(c: SynthCmd, config: Value) -> CmdResult {
    let g = graph_arg(&c.graph)?;
    let cfg = c.flags.config(c.flags.mem.unwrap_or(1));
    cfg.validate().input()?;
    let mut run = Run::new("synth", config, out_dir(&c.out.out)?);
    run.input(&c.graph);
    run.manifest.config["synth_config"] = to_value(&cfg);
    run.manifest.seeds = c.flags.trial_seeds(&cfg);
    let res = run.time("synthesize", || synthesize(&g, &cfg))?;
    let seeds: Vec<u64> = res.trials.iter().map(|t| t.0).collect();
    let dvals: Vec<f64> = res.trials.iter().map(|t| t.1).collect();
    let summary = json!({
        "graph": c.graph,
        "mem": cfg.mem_size,
        "dval": res.best_dval,
        "best_step": res.best_step,
        "steps_run": res.steps_run,
        "alpha_max": g.alpha_max(),
        "trials": trials_json(&seeds, &dvals, None, 1.0),
    });
    run.write("strategy.json", &save_strategy(&res.best_strategy, &g))?;
    run.write("trace.csv", trace_csv(&res.trace).as_bytes())?;
    run.write_json("summary.json", &summary)?;
    print_json(&summary);
    run.finish()
}

fn cmd_eval(c: EvalCmd, config: Value) -> CmdResult {
    let g = graph_arg(&c.graph)?;
    let s = strategy_arg(&c.strategy, &g)?;
    let mut run = Run::new("eval", config, out_dir(&c.out.out)?);
    run.input(&c.graph);
    run.input(&c.strategy);
    let ev = Evaluator::new(&g, s.layout.clone())?;
    let r = run.time("evaluate", || ev.evaluate(&s.probs, c.mode.into()));
    let summary = to_value(&summary(&r, &s, &g));
    run.write("steals.csv", steals_csv(&r, &s, &g).as_bytes())?;
    run.write_json("summary.json", &summary)?;
    print_json(&summary);
    run.finish()
}

/// Per-trial dvals and holes of `sigma1 → trial strategy`, in trial order.
fn score_trials(ce: &ChangingEnvironment, sigma1: &RegularStrategy, trials: &[SynthResult]) -> CmdResult<(Vec<f64>, Vec<f64>)> {
    let dvals = trials.iter().map(|t| t.best_dval).collect();
    let holes = trials
        .iter()
        .map(|t| estimate_hole(ce, sigma1, &t.best_strategy).map(|h| h.hole_ub))
        .collect::<Result<_, _>>()?;
    Ok((dvals, holes))
}

fn arm_json(seeds: &[u64], dvals: &[f64], holes: &[f64], norm: f64) -> Value {
    json!({
        "mean_dval": mean(dvals) * norm,
        "mean_hole_ub": mean(holes) * norm,
        "trials": trials_json(seeds, dvals, Some(holes), norm),
    })
}

fn cmd_adapt(c: AdaptCmd, config: Value) -> CmdResult {
    let g1 = graph_arg(&c.g1)?;
    let g2 = graph_arg(&c.g2)?;
    let sigma1 = strategy_arg(&c.sigma1, &g1)?;
    let mem = sigma1.mem_size();
    if c.flags.mem.is_some_and(|m| m != mem) {
        return bad_input(format!("--mem {} differs from the memory size {mem} of {}", c.flags.mem.unwrap(), c.sigma1));
    }
    let cfg = c.flags.config(mem);
    cfg.validate().input()?;
    let ce = ChangingEnvironment::new(g1, g2).input()?;
    let mut run = Run::new("adapt", config, out_dir(&c.out.out)?);
    for a in [&c.g1, &c.g2, &c.sigma1] {
        run.input(a);
    }
    run.manifest.config["synth_config"] = to_value(&cfg);
    let seeds = c.flags.trial_seeds(&cfg);
    run.manifest.seeds = seeds.clone();

    let warm = run.time("warm_start", || warm_trials(&ce, &sigma1, &cfg))?;
    let (wd, wh) = run.time("warm_holes", || score_trials(&ce, &sigma1, &warm))?;
    let norm = 100.0 / ce.g2.alpha_max();
    let best = (0..warm.len()).fold(0, |b, i| if wd[i] > wd[b] { i } else { b });
    let mut cmp = json!({
        "normalization": norm,
        "alpha_max2": ce.g2.alpha_max(),
        "dval": wd[best] * norm,
        "hole_ub": wh[best] * norm,
        "best_trial": best,
        "warm": arm_json(&seeds, &wd, &wh, norm),
    });
    if c.baseline {
        let cold = run.time("cold_start", || cold_trials(&ce.g2, &cfg))?;
        let (cd, ch) = run.time("cold_holes", || score_trials(&ce, &sigma1, &cold))?;
        cmp["baseline"] = arm_json(&seeds, &cd, &ch, norm);
    }
    run.write("strategy.json", &save_strategy(&warm[best].best_strategy, &ce.g2))?;
    run.write("trace.csv", trace_csv(&warm[best].trace).as_bytes())?;
    run.write_json("comparison.json", &cmp)?;
    print_json(&cmp);
    run.finish()
}

struct Loaded {
    ce: ChangingEnvironment,
    sigma1: RegularStrategy,
    sigma2: RegularStrategy,
}

fn load_pair(p: &Pair, run: &mut Run) -> CmdResult<Loaded> {
    let g1 = graph_arg(&p.g1)?;
    let g2 = graph_arg(&p.g2)?;
    let sigma1 = strategy_arg(&p.sigma1, &g1)?;
    let sigma2 = strategy_arg(&p.sigma2, &g2)?;
    if sigma1.mem_size() != sigma2.mem_size() {
        return bad_input(format!("memory sizes differ: {} vs {}", sigma1.mem_size(), sigma2.mem_size()));
    }
    for a in [&p.g1, &p.g2, &p.sigma1, &p.sigma2] {
        run.input(a);
    }
    Ok(Loaded { ce: ChangingEnvironment::new(g1, g2).input()?, sigma1, sigma2 })
}

fn cmd_hole(c: HoleCmd, config: Value) -> CmdResult {
    let mut run = Run::new("hole", config, out_dir(&c.out.out)?);
    let l = load_pair(&c.pair, &mut run)?;
    let opts = HoleOptions { naive: c.naive, ..HoleOptions::default() };
    let r = run.time("estimate_hole", || estimate_hole_with(&l.ce, &l.sigma1, &l.sigma2, opts))?;
    let full = report_json(&r, &l.sigma1, &l.ce.g1);
    run.write_json("hole.json", &to_value(&full))?;
    run.write("hole_pairs.csv", pairs_csv(&r, &l.sigma1, &l.ce.g1).as_bytes())?;
    let mut brief = to_value(&full);
    if let Some(obj) = brief.as_object_mut() {
        let n = full.pairs.len();
        obj.remove("pairs");
        obj.insert("n_pairs".into(), json!(n));
    }
    print_json(&brief);
    run.finish()
}

fn cmd_mitigate(c: MitigateCmd, config: Value) -> CmdResult {
    if !(c.hole_budget.is_finite() && c.hole_budget > 0.0) {
        return bad_input(format!("--hole-budget must be positive, got {}", c.hole_budget));
    }
    let mut run = Run::new("mitigate", config, out_dir(&c.out.out)?);
    let l = load_pair(&c.pair, &mut run)?;
    let r = run.time("mitigation", || mitigation_report(&l.ce, &l.sigma1, &l.sigma2, c.hole_budget, None))?;
    if !r.assumptions.all() {
        eprintln!("warning: switch assumptions do not all hold; the bound is not guaranteed: {:?}", r.assumptions);
    }
    let v = to_value(&r);
    run.write_json("mitigation.json", &v)?;
    print_json(&v);
    run.finish()
}

fn parse_aug(g: &PatrollingGraph, mem: usize, s: &str) -> CmdResult<AugmentedVertex> {
    let (name, m) = match s.rsplit_once(':') {
        Some((n, m)) => match m.parse::<usize>() {
            Ok(m) => (n, m),
            Err(_) => return bad_input(format!("bad memory element in {s:?}")),
        },
        None => (s, 0),
    };
    let vertex = match g.vertex(name) {
        Some(v) => v,
        None => return bad_input(format!("unknown vertex {name:?}")),
    };
    if m >= mem {
        return bad_input(format!("memory element {m} out of range for memory size {mem}"));
    }
    Ok(AugmentedVertex { vertex, mem: m })
}

/// Attack given on the command line, resolved against σ1's layout.
fn explicit_attack(c: &SimulateCmd, g: &PatrollingGraph, s: &RegularStrategy) -> CmdResult<Option<(usize, usize)>> {
    let (Some(from), Some(to), Some(target)) = (&c.from, &c.to, &c.target) else { return Ok(None) };
    let a = parse_aug(g, s.mem_size(), from)?;
    let b = parse_aug(g, s.mem_size(), to)?;
    let Some(slot) = s.layout.slot(g, a, b) else { return bad_input(format!("no edge {from} -> {to}")) };
    let Some(t) = g.vertex(target) else { return bad_input(format!("unknown vertex {target:?}")) };
    if g.target_index(t).is_none() {
        return bad_input(format!("{target} is not a target"));
    }
    Ok(Some((slot, t)))
}

fn attack_json(spec: &AttackSpec, s: &RegularStrategy, g: &PatrollingGraph) -> Value {
    let l = &s.layout;
    let named = |a: usize| {
        let x = l.aug(a);
        json!([g.name(x.vertex), x.mem])
    };
    json!({
        "edge": [named(l.slot_src[spec.slot]), named(l.slot_dst[spec.slot])],
        "target": g.name(spec.target),
        "delta": spec.delta,
        "delta_t": spec.delta_t,
    })
}

fn cmd_simulate(c: SimulateCmd, config: Value) -> CmdResult {
    if c.runs == 0 {
        return bad_input("--runs must be at least 1".into());
    }
    if c.kappa.is_some_and(|k| !(k > 0.0 && k <= 1.0)) {
        return bad_input(format!("--kappa must lie in (0, 1], got {}", c.kappa.unwrap()));
    }
    let mut run = Run::new("simulate", config, out_dir(&c.out.out)?);
    run.manifest.seeds = vec![c.seed];
    let g1 = graph_arg(&c.graph)?;
    let sigma1 = strategy_arg(&c.strategy, &g1)?;
    run.input(&c.graph);
    run.input(&c.strategy);
    let explicit = explicit_attack(&c, &g1, &sigma1)?;

    let (stats, attack, mode): (SimStats, Option<Value>, &str) = match (&c.g2, &c.sigma2) {
        (Some(g2a), Some(s2a)) => {
            let g2 = graph_arg(g2a)?;
            let sigma2 = strategy_arg(s2a, &g2)?;
            run.input(g2a);
            run.input(s2a);
            let ce = ChangingEnvironment::new(g1.clone(), g2).input()?;
            let (slot, target, default_dt) = match explicit {
                Some((slot, t)) => (slot, t, None),
                None => {
                    let rep = run.time("estimate_hole", || estimate_hole(&ce, &sigma1, &sigma2))?;
                    if let Some(k) = c.kappa {
                        let policy = AttackPolicy::worst_case_sampling(&rep, &ce, &sigma1)?;
                        let (st, rows) = run.time("simulate", || {
                            simulate_kappa_switch(&ce, &sigma1, &sigma2, k, &policy, c.runs, c.seed)
                        })?;
                        run.write("runs.csv", kappa_runs_csv(&rows).as_bytes())?;
                        let v = json!({ "mode": "kappa", "kappa": k, "policy": "worst_case_sampling", "stats": to_value(&st) });
                        run.write_json("sim.json", &v)?;
                        print_json(&v);
                        return run.finish();
                    }
                    let w = rep.worst.ok_or(patrolswitch::Error::EmptyTable)?;
                    (w.slot, ce.g1.targets()[w.target].vertex, Some(w.delta_t.max(1)))
                }
            };
            let delta_t = match (c.delta_t, default_dt) {
                (Some(dt), _) | (None, Some(dt)) => dt,
                (None, None) => return bad_input("--delta-t is required with an explicit attack".into()),
            };
            let spec = AttackSpec { slot, target, delta: c.delta, delta_t };
            match c.kappa {
                Some(k) => {
                    let policy = AttackPolicy::fixed(spec);
                    let (st, rows) =
                        run.time("simulate", || simulate_kappa_switch(&ce, &sigma1, &sigma2, k, &policy, c.runs, c.seed))?;
                    run.write("runs.csv", kappa_runs_csv(&rows).as_bytes())?;
                    (st, Some(attack_json(&spec, &sigma1, &g1)), "kappa")
                }
                None => {
                    let st = run.time("simulate", || simulate_switch(&ce, &sigma1, &sigma2, spec, c.runs, c.seed))?;
                    (st, Some(attack_json(&spec, &sigma1, &g1)), "plan")
                }
            }
        }
        _ => {
            let (slot, target) = match explicit {
                Some(x) => x,
                None => {
                    let r = Evaluator::new(&g1, sigma1.layout.clone())?.evaluate(&sigma1.probs, EvalMode::AllSupport);
                    let (slot, k) = r.argmax.ok_or(patrolswitch::Error::EmptyTable)?;
                    (slot, g1.targets()[k].vertex)
                }
            };
            let st = run.time("simulate", || simulate_static(&g1, &sigma1, slot, target, c.delta, c.runs, c.seed))?;
            let spec = AttackSpec { slot, target, delta: c.delta, delta_t: 0 };
            let mut a = attack_json(&spec, &sigma1, &g1);
            a.as_object_mut().expect("object").remove("delta_t");
            (st, Some(a), "static")
        }
    };
    let mut v = json!({ "mode": mode, "stats": to_value(&stats) });
    if let Some(k) = c.kappa {
        v["kappa"] = json!(k);
    }
    if let Some(a) = attack {
        v["attack"] = a;
    }
    run.write_json("sim.json", &v)?;
    print_json(&v);
    run.finish()
}

fn median_ms(mut xs: Vec<Duration>) -> f64 {
    xs.sort();
    xs[xs.len() / 2].as_secs_f64() * 1e3
}

fn cmd_bench(c: BenchCmd, config: Value) -> CmdResult {
    if c.steps == 0 || c.reps == 0 || c.mem == 0 {
        return bad_input("--steps, --reps and --mem must be at least 1".into());
    }
    let mut run = Run::new("bench", config, out_dir(&c.out.out)?);
    run.manifest.seeds = vec![c.seed];
    let base = match c.family {
        Family::Building => SynthConfig::building(),
        Family::City => SynthConfig::city(),
    };
    let cfg = SynthConfig { steps: c.steps, mem_size: c.mem, seed: c.seed, ..base };
    let mut csv = String::from("graph,mem,steps,forward_ms,adjoint_ms,step_ms\n");
    for name in &c.graphs {
        let g = graph_arg(name)?;
        run.input(name);
        let init = random_init(&g, c.mem, c.seed)?;
        let ev = Evaluator::new(&g, init.layout.clone())?;
        let probs = ev.softmax(&init.logits);
        let fw = ev.forward(&probs);
        let (_, adj) = loss_adjoint(&fw.steal, cfg.eps_loss, cfg.pwr);
        let (mut tf, mut tb) = (Vec::new(), Vec::new());
        for _ in 0..c.reps {
            let t = Instant::now();
            black_box(ev.forward(&probs));
            tf.push(t.elapsed());
            let t = Instant::now();
            black_box(ev.backward(&probs, &fw, &adj));
            tb.push(t.elapsed());
        }
        let res = optimize(&g, &init, &cfg)?;
        let step = res.wall_time.as_secs_f64() * 1e3 / c.steps as f64;
        csv.push_str(&format!("{name},{},{},{:.4},{:.4},{:.4}\n", c.mem, c.steps, median_ms(tf), median_ms(tb), step));
    }
    run.write("bench.csv", csv.as_bytes())?;
    let _ = std::io::stdout().lock().write_all(csv.as_bytes());
    run.finish()
}
