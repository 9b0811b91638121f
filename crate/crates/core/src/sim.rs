//! Exact enumeration and Monte-Carlo simulation of plays.
//!
//! Times are relative to the start of the attack. The Defender entered the
//! attacked augmented edge `δ` time units earlier and the environment changes
//! `Δt` units after the start. A catch is a visit of τ at a time in
//! `[1, d(τ)]`. An attack that completes before the change (`Δt > d(τ)`)
//! costs `α1(τ)`, otherwise `α2(τ)`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ChangingEnvironment, PatrollingGraph};
use crate::hole::HoleReport;
use crate::rng::rng;
use crate::strategy::RegularStrategy;
use crate::switcher::{SwitchCase, SwitchPlanner};

/// Node budget of the exhaustive enumerations.
pub const MAX_TREE_NODES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Slot of the attacked augmented edge in σ1's layout.
    pub slot: usize,
    /// Target vertex.
    pub target: usize,
    pub delta: u32,
    pub delta_t: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub runs: usize,
    pub mean_steal: f64,
    pub std_err: f64,
    pub catches: usize,
    /// Mean time from the change to the handover; absent without a switch.
    pub mean_switch_delay: Option<f64>,
}

fn target_index(g: &PatrollingGraph, v: usize) -> Result<usize> {
    g.target_index(v).ok_or_else(|| Error::NotATarget(g.name(v).to_string()))
}

fn check_slot(s: &RegularStrategy, slot: usize) -> Result<()> {
    if slot >= s.probs.len() {
        return Err(Error::Strategy(format!("slot {slot} out of range")));
    }
    Ok(())
}

/// α(τ) times the probability that σ, started on `slot`, misses τ within
/// `d(τ) − time(slot)`, by enumerating the walk tree.
pub fn exact_steal_bruteforce(g: &PatrollingGraph, sigma: &RegularStrategy, slot: usize, target: usize) -> Result<f64> {
    if !sigma.layout.matches(g) {
        return Err(Error::TopologyMismatch);
    }
    check_slot(sigma, slot)?;
    let k = target_index(g, target)?;
    let tg = g.targets()[k];
    let time = sigma.layout.slot_times(g);
    let l = &*sigma.layout;
    let d = tg.attack_time as u64;
    let r0 = time[slot] as u64;
    let b = l.slot_dst[slot];
    if r0 > d {
        return Ok(tg.cost);
    }
    if l.vertex_of(b) == target {
        return Ok(0.0);
    }
    let mut nodes = 0usize;
    fn rec(
        sigma: &RegularStrategy,
        time: &[u32],
        target: usize,
        d: u64,
        a: usize,
        r: u64,
        nodes: &mut usize,
    ) -> Result<f64> {
        *nodes += 1;
        if *nodes > MAX_TREE_NODES {
            return Err(Error::TooLarge(MAX_TREE_NODES));
        }
        let l = &*sigma.layout;
        let mut miss = 0.0;
        for s in l.row(a) {
            let p = sigma.probs[s];
            if p == 0.0 {
                continue;
            }
            let r2 = r + time[s] as u64;
            let b = l.slot_dst[s];
            if r2 > d {
                miss += p;
            } else if l.vertex_of(b) != target {
                miss += p * rec(sigma, time, target, d, b, r2, nodes)?;
            }
        }
        Ok(miss)
    }
    Ok(tg.cost * rec(sigma, &time, target, d, b, r0, &mut nodes)?)
}

/// Shared tables for walking σ1 then σ2 across the change.
struct Walker<'a> {
    sigma1: &'a RegularStrategy,
    sigma2: Option<&'a RegularStrategy>,
    time1: Vec<u32>,
    /// G2 time of the graph edge under each σ1 slot, if the edge survives.
    time1_g2: Vec<Option<u32>>,
    time2: Vec<u32>,
    g2: &'a PatrollingGraph,
    planner: Option<SwitchPlanner>,
}

impl<'a> Walker<'a> {
    fn new(ce: &'a ChangingEnvironment, sigma1: &'a RegularStrategy, sigma2: Option<&'a RegularStrategy>) -> Result<Self> {
        if !sigma1.layout.matches(&ce.g1) {
            return Err(Error::TopologyMismatch);
        }
        let l1 = &*sigma1.layout;
        let time1 = l1.slot_times(&ce.g1);
        let time1_g2 = (0..l1.n_slots())
            .map(|s| {
                let e = &ce.g1.edges()[l1.slot_edge[s]];
                ce.g2.edge_id(e.from, e.to).map(|id| ce.g2.edges()[id].time)
            })
            .collect();
        let (time2, planner) = match sigma2 {
            Some(s2) => {
                if s2.mem_size() != sigma1.mem_size() {
                    return Err(Error::MemMismatch(sigma1.mem_size(), s2.mem_size()));
                }
                if !s2.layout.matches(&ce.g2) {
                    return Err(Error::TopologyMismatch);
                }
                (s2.layout.slot_times(&ce.g2), Some(SwitchPlanner::new(s2, &ce.g2, None)?))
            }
            None => (Vec::new(), None),
        };
        Ok(Walker { sigma1, sigma2, time1, time1_g2, time2, g2: &ce.g2, planner })
    }

    fn no_switch(&self, a: usize) -> Error {
        let v = self.sigma1.layout.aug(a);
        Error::NoSwitch { vertex: self.g2.name(v.vertex).to_string(), mem: v.mem }
    }

    /// Handover at `a` at time `r`. Returns the σ2 entry, its arrival time and
    /// whether τ was visited in time on the connecting path.
    fn handover(&self, a: usize, r: u64, target: usize, d: u64) -> Result<(usize, u64, bool)> {
        let planner = self.planner.as_ref().expect("switch needs σ2");
        let plan = planner.plan_at(a);
        let mem = planner.mem();
        match plan.case {
            SwitchCase::A => {
                let e = plan.entry.expect("entry");
                Ok((e.vertex * mem + e.mem, r, false))
            }
            SwitchCase::B => {
                let path = plan.path.as_ref().expect("path");
                let e = plan.entry.expect("entry");
                let mut t = r;
                let mut hit = false;
                for w in path.windows(2) {
                    let id = self.g2.edge_id(w[0], w[1]).expect("path edge");
                    t += self.g2.edges()[id].time as u64;
                    hit |= w[1] == target && t <= d;
                }
                Ok((e.vertex * mem + e.mem, t, hit))
            }
            SwitchCase::C => Err(self.no_switch(a)),
        }
    }
}

/// Miss probability of σ2 from arrival at `a` at time `r`.
fn post_miss(w: &Walker, a: usize, r: u64, target: usize, d: u64, nodes: &mut usize) -> Result<f64> {
    *nodes += 1;
    if *nodes > MAX_TREE_NODES {
        return Err(Error::TooLarge(MAX_TREE_NODES));
    }
    let s2 = w.sigma2.expect("σ2");
    let l = &*s2.layout;
    if l.vertex_of(a) == target && r <= d {
        return Ok(0.0);
    }
    let mut miss = 0.0;
    for s in l.row(a) {
        let p = s2.probs[s];
        if p == 0.0 {
            continue;
        }
        let r2 = r + w.time2[s] as u64;
        let b = l.slot_dst[s];
        if r2 > d {
            miss += p;
        } else if l.vertex_of(b) != target {
            miss += p * post_miss(w, b, r2, target, d, nodes)?;
        }
    }
    Ok(miss)
}

/// Miss probability from arrival at `a` at time `r` before the handover.
fn pre_miss(w: &Walker, a: usize, r: u64, target: usize, d: u64, dt: u64, nodes: &mut usize) -> Result<f64> {
    *nodes += 1;
    if *nodes > MAX_TREE_NODES {
        return Err(Error::TooLarge(MAX_TREE_NODES));
    }
    if r >= dt {
        let (e, r2, hit) = w.handover(a, r, target, d)?;
        if hit {
            return Ok(0.0);
        }
        if r2 > d {
            return Ok(1.0);
        }
        return post_miss(w, e, r2, target, d, nodes);
    }
    let l = &*w.sigma1.layout;
    let mut miss = 0.0;
    for s in l.row(a) {
        let p = w.sigma1.probs[s];
        if p == 0.0 {
            continue;
        }
        let r2 = r + w.time1[s] as u64;
        let b = l.slot_dst[s];
        if r2 > d {
            miss += p;
        } else if l.vertex_of(b) != target {
            miss += p * pre_miss(w, b, r2, target, d, dt, nodes)?;
        }
    }
    Ok(miss)
}

fn check_spec(ce: &ChangingEnvironment, sigma1: &RegularStrategy, spec: &AttackSpec) -> Result<(usize, u64)> {
    check_slot(sigma1, spec.slot)?;
    let k = target_index(&ce.g1, spec.target)?;
    let time = sigma1.layout.slot_times(&ce.g1)[spec.slot];
    if spec.delta >= time {
        return Err(Error::Config(format!("delay {} must be below the edge time {time}", spec.delta)));
    }
    if spec.delta_t < 1 {
        return Err(Error::Config("switch offset must be at least 1".into()));
    }
    Ok((k, (time - spec.delta) as u64))
}

fn attack_cost(ce: &ChangingEnvironment, k: usize, delta_t: u32) -> (f64, u64) {
    let d = ce.g1.targets()[k].attack_time;
    let cost = if delta_t > d { ce.g1.targets()[k].cost } else { ce.g2.targets()[k].cost };
    (cost, d as u64)
}

/// Exact steal of one attack with a switch from σ1 to σ2 `Δt` after it starts.
pub fn exact_switch_steal(ce: &ChangingEnvironment, sigma1: &RegularStrategy, sigma2: &RegularStrategy, spec: AttackSpec) -> Result<f64> {
    let w = Walker::new(ce, sigma1, Some(sigma2))?;
    let (k, r0) = check_spec(ce, sigma1, &spec)?;
    let (cost, d) = attack_cost(ce, k, spec.delta_t);
    let b = sigma1.layout.slot_dst[spec.slot];
    if r0 > d {
        return Ok(cost);
    }
    if sigma1.layout.vertex_of(b) == spec.target {
        return Ok(0.0);
    }
    let mut nodes = 0;
    Ok(cost * pre_miss(&w, b, r0, spec.target, d, spec.delta_t as u64, &mut nodes)?)
}

/// Handover rule of a simulated walk.
#[derive(Debug, Clone, Copy)]
enum Mode {
    Static,
    Plan,
    Kappa(f64),
}

struct Outcome {
    caught: bool,
    delay: Option<u64>,
}

fn sample_slot(s: &RegularStrategy, a: usize, rng: &mut ChaCha8Rng) -> usize {
    let row = s.layout.row(a);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = row.start;
    for i in row {
        let p = s.probs[i];
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn run_once(w: &Walker, spec: &AttackSpec, d: u64, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let l1 = &*w.sigma1.layout;
    let dt = spec.delta_t as u64;
    let target = spec.target;
    let mut a = l1.slot_dst[spec.slot];
    let mut r = (w.time1[spec.slot] - spec.delta) as u64;
    let mut caught = false;
    let mut switched = false;
    let mut delay = None;
    let kappa_mode = matches!(mode, Mode::Kappa(_));
    loop {
        if !switched {
            if l1.vertex_of(a) == target && r <= d {
                caught = true;
            }
            let go = match mode {
                Mode::Static => false,
                Mode::Plan => r >= dt,
                Mode::Kappa(k) => r > dt && rng.random::<f64>() < k,
            };
            let mut forced = false;
            if !go {
                // the randomized switch keeps walking until it hands over
                if (caught || r > d) && !kappa_mode {
                    return Ok(Outcome { caught, delay });
                }
                let s = sample_slot(w.sigma1, a, rng);
                let t = if kappa_mode && r >= dt { w.time1_g2[s] } else { Some(w.time1[s]) };
                match t {
                    Some(t) => {
                        a = l1.slot_dst[s];
                        r += t as u64;
                        continue;
                    }
                    // σ1 cannot use an edge the change removed: hand over here
                    None => forced = true,
                }
            }
            if go || forced {
                let (e, r2, hit) = w.handover(a, r, target, d)?;
                caught |= hit;
                delay = Some(r - dt);
                switched = true;
                a = e;
                r = r2;
            }
        } else {
            let s2 = w.sigma2.expect("σ2");
            let l2 = &*s2.layout;
            if l2.vertex_of(a) == target && r <= d {
                caught = true;
            }
            if caught || r > d {
                return Ok(Outcome { caught, delay });
            }
            let s = sample_slot(s2, a, rng);
            a = l2.slot_dst[s];
            r += w.time2[s] as u64;
        }
    }
}

fn collect_stats(samples: Vec<(f64, bool, Option<u64>)>) -> SimStats {
    let n = samples.len();
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n as f64;
    let var = if n > 1 { samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let delays: Vec<u64> = samples.iter().filter_map(|s| s.2).collect();
    SimStats {
        runs: n,
        mean_steal: mean,
        std_err: (var / n as f64).sqrt(),
        catches: samples.iter().filter(|s| s.1).count(),
        mean_switch_delay: (!delays.is_empty()).then(|| delays.iter().sum::<u64>() as f64 / delays.len() as f64),
    }
}

fn check_runs(runs: usize) -> Result<()> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    Ok(())
}

/// Monte-Carlo estimate of `exact_switch_steal`. Run `i` draws from stream
/// `i` of `seed`.
pub fn simulate_switch(
    ce: &ChangingEnvironment,
    sigma1: &RegularStrategy,
    sigma2: &RegularStrategy,
    spec: AttackSpec,
    runs: usize,
    seed: u64,
) -> Result<SimStats> {
    check_runs(runs)?;
    let w = Walker::new(ce, sigma1, Some(sigma2))?;
    let (k, _) = check_spec(ce, sigma1, &spec)?;
    let (cost, d) = attack_cost(ce, k, spec.delta_t);
    let samples = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng(seed, i as u64);
            let o = run_once(&w, &spec, d, Mode::Plan, &mut rng)?;
            Ok((if o.caught { 0.0 } else { cost }, o.caught, o.delay))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_stats(samples))
}

/// Monte-Carlo estimate of a steal of σ without any change.
pub fn simulate_static(g: &PatrollingGraph, sigma: &RegularStrategy, slot: usize, target: usize, delta: u32, runs: usize, seed: u64) -> Result<SimStats> {
    check_runs(runs)?;
    let ce = ChangingEnvironment::new(g.clone(), g.clone())?;
    let w = Walker::new(&ce, sigma, None)?;
    let spec = AttackSpec { slot, target, delta, delta_t: u32::MAX };
    let (k, _) = check_spec(&ce, sigma, &spec)?;
    let (cost, d) = attack_cost(&ce, k, spec.delta_t);
    let samples = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng(seed, i as u64);
            let o = run_once(&w, &spec, d, Mode::Static, &mut rng)?;
            Ok((if o.caught { 0.0 } else { cost }, o.caught, None))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_stats(samples))
}

/// Attacks used by the randomized-switch simulation: the analyzer's worst
/// cell with probability `p_argmax`, otherwise a cell `(pair, δ, Δt)` drawn
/// uniformly from the eligible ones. A probe, not an optimal Attacker.
#[derive(Debug, Clone)]
pub struct AttackPolicy {
    pub argmax: AttackSpec,
    pub p_argmax: f64,
    /// Eligible `(slot, target vertex)` pairs.
    pub pairs: Vec<(usize, usize)>,
    weights: Option<WeightedIndex<u64>>,
}

impl AttackPolicy {
    pub fn fixed(spec: AttackSpec) -> Self {
        AttackPolicy { argmax: spec, p_argmax: 1.0, pairs: Vec::new(), weights: None }
    }

    /// Worst-case sampling over the pairs of a hole report.
    pub fn worst_case_sampling(report: &HoleReport, ce: &ChangingEnvironment, sigma1: &RegularStrategy) -> Result<Self> {
        let w = report.worst.ok_or(Error::EmptyTable)?;
        let tv = |k: usize| ce.g1.targets()[k].vertex;
        let argmax = AttackSpec { slot: w.slot, target: tv(w.target), delta: 0, delta_t: w.delta_t.max(1) };
        let time = sigma1.layout.slot_times(&ce.g1);
        let pairs: Vec<(usize, usize)> = report.pairs.iter().map(|p| (p.slot, tv(p.target))).collect();
        let weights: Vec<u64> = report
            .pairs
            .iter()
            .map(|p| time[p.slot] as u64 * ce.g1.targets()[p.target].attack_time as u64)
            .collect();
        let weights = WeightedIndex::new(weights).map_err(|e| Error::Config(e.to_string()))?;
        Ok(AttackPolicy { argmax, p_argmax: 0.5, pairs, weights: Some(weights) })
    }

    fn draw(&self, ce: &ChangingEnvironment, time1: &[u32], rng: &mut ChaCha8Rng) -> AttackSpec {
        let weights = match &self.weights {
            Some(w) if rng.random::<f64>() >= self.p_argmax => w,
            _ => return self.argmax,
        };
        let (slot, target) = self.pairs[weights.sample(rng)];
        let d = ce.g1.targets()[ce.g1.target_index(target).expect("target")].attack_time;
        AttackSpec { slot, target, delta: rng.random_range(0..time1[slot]), delta_t: rng.random_range(1..=d) }
    }
}

/// One run of the randomized switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaRun {
    pub run: usize,
    pub attack: AttackSpec,
    pub steal: f64,
    pub switch_delay: u64,
}

/// The randomized switch: after the change the Defender keeps playing σ1
/// (with G2 travel times for moves started after the change) and at every
/// vertex arrival strictly after it hands over to σ2 with probability κ.
pub fn simulate_kappa_switch(
    ce: &ChangingEnvironment,
    sigma1: &RegularStrategy,
    sigma2: &RegularStrategy,
    kappa: f64,
    policy: &AttackPolicy,
    runs: usize,
    seed: u64,
) -> Result<(SimStats, Vec<KappaRun>)> {
    check_runs(runs)?;
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Config(format!("kappa must be in (0, 1], got {kappa}")));
    }
    let w = Walker::new(ce, sigma1, Some(sigma2))?;
    let rows = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng(seed, i as u64);
            let spec = policy.draw(ce, &w.time1, &mut rng);
            let (k, _) = check_spec(ce, sigma1, &spec)?;
            let (cost, d) = attack_cost(ce, k, spec.delta_t);
            let o = run_once(&w, &spec, d, Mode::Kappa(kappa), &mut rng)?;
            Ok((
                (if o.caught { 0.0 } else { cost }, o.caught, o.delay),
                KappaRun { run: i, attack: spec, steal: if o.caught { 0.0 } else { cost }, switch_delay: o.delay.unwrap_or(0) },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (samples, detail): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((collect_stats(samples), detail))
}

pub fn kappa_runs_csv(rows: &[KappaRun]) -> String {
    let mut out = String::from("run,slot,target,delta,delta_t,steal,switch_delay\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.run,
            r.attack.slot,
            r.attack.target,
            r.attack.delta,
            r.attack.delta_t,
            crate::strategy::fmt_f64(r.steal),
            r.switch_delay
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{evaluate, EvalMode};
    use crate::scenarios;
    use crate::strategy::AugmentedVertex;

    fn tri() -> (ChangingEnvironment, RegularStrategy, RegularStrategy) {
        let ce = ChangingEnvironment::new(scenarios::triangle_g1(), scenarios::triangle_g2()).unwrap();
        (ce, scenarios::triangle_sigma1(), scenarios::triangle_sigma2())
    }

    fn slot(ce: &ChangingEnvironment, s: &RegularStrategy, a: &str, b: &str) -> usize {
        let v = |n: &str| AugmentedVertex { vertex: ce.g1.vertex(n).unwrap(), mem: 0 };
        s.layout.slot(&ce.g1, v(a), v(b)).unwrap()
    }

    #[test]
    fn clockwise_covers_everything() {
        let (ce, s1, _) = tri();
        for e in s1.support() {
            for t in ce.g1.targets() {
                assert_eq!(exact_steal_bruteforce(&ce.g1, &s1, e, t.vertex).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn wrong_way_walk_misses() {
        let g = scenarios::triangle_g1();
        let v = |n: &str| g.vertex(n).unwrap();
        let tight = g.with_edges(g.edges().to_vec()).unwrap();
        let s = RegularStrategy::deterministic(&tight, 1, |a| {
            let next = if a.vertex == v("v1") { v("v2") } else { v("v1") };
            AugmentedVertex { vertex: next, mem: 0 }
        })
        .unwrap();
        let e = s.layout.slot(&g, AugmentedVertex { vertex: v("v2"), mem: 0 }, AugmentedVertex { vertex: v("v1"), mem: 0 }).unwrap();
        assert_eq!(exact_steal_bruteforce(&g, &s, e, v("v3")).unwrap(), 100.0);
    }

    #[test]
    fn uniform_matches_evaluator() {
        let g = scenarios::triangle_g1();
        let s = RegularStrategy::uniform(&g, 1).unwrap();
        let r = evaluate(&s, &g, EvalMode::AllSupport).unwrap();
        for (e, k, v) in r.steals.iter() {
            let b = exact_steal_bruteforce(&g, &s, e, g.targets()[k].vertex).unwrap();
            assert!((b - v).abs() < 1e-9);
        }
        assert!((r.aval - 25.0).abs() < 1e-9);
    }

    #[test]
    fn example_switch_attack() {
        let (ce, s1, s2) = tri();
        let e = slot(&ce, &s1, "v3", "v1");
        let v3 = ce.g1.vertex("v3").unwrap();
        let spec = AttackSpec { slot: e, target: v3, delta: 1, delta_t: 2 };
        assert_eq!(exact_switch_steal(&ce, &s1, &s2, spec).unwrap(), 100.0);
        let late = AttackSpec { delta_t: 7, ..spec };
        assert_eq!(exact_switch_steal(&ce, &s1, &s2, late).unwrap(), exact_steal_bruteforce(&ce.g1, &s1, e, v3).unwrap());
        let st = simulate_switch(&ce, &s1, &s2, spec, 50, 3).unwrap();
        assert_eq!((st.mean_steal, st.std_err, st.catches), (100.0, 0.0, 0));
    }

    #[test]
    fn single_run_is_bernoulli() {
        let g = scenarios::triangle_g1();
        let s = RegularStrategy::uniform(&g, 1).unwrap();
        for seed in 0..10 {
            let st = simulate_static(&g, &s, 0, g.targets()[0].vertex, 0, 1, seed).unwrap();
            assert!(st.mean_steal == 0.0 || st.mean_steal == 100.0);
        }
    }

    #[test]
    fn static_simulation_converges() {
        let g = scenarios::triangle_g1();
        let s = RegularStrategy::uniform(&g, 1).unwrap();
        let v1 = g.vertex("v1").unwrap();
        let exact = exact_steal_bruteforce(&g, &s, 0, v1).unwrap();
        let st = simulate_static(&g, &s, 0, v1, 0, 20_000, 11).unwrap();
        assert!((st.mean_steal - exact).abs() <= 3.0 * st.std_err + 1e-12);
        assert_eq!(st, simulate_static(&g, &s, 0, v1, 0, 20_000, 11).unwrap());
    }

    #[test]
    fn kappa_half_on_unit_cycle() {
        let src = r#"{"vertices":["a","b","c"],"targets":[{"id":"a","d":3,"alpha":1},{"id":"b","d":3,"alpha":1},{"id":"c","d":3,"alpha":1}],
            "edges":[{"from":"a","to":"b","time":1},{"from":"b","to":"c","time":1},{"from":"c","to":"a","time":1}]}"#;
        let g = crate::graph::load_graph(src.as_bytes()).unwrap();
        let s = RegularStrategy::uniform(&g, 1).unwrap();
        let ce = ChangingEnvironment::new(g.clone(), g).unwrap();
        let spec = AttackSpec { slot: 0, target: 0, delta: 0, delta_t: 1 };
        let (st, rows) = simulate_kappa_switch(&ce, &s, &s, 0.5, &AttackPolicy::fixed(spec), 20_000, 5).unwrap();
        let delays: Vec<f64> = rows.iter().map(|r| r.switch_delay as f64).collect();
        let m = delays.iter().sum::<f64>() / delays.len() as f64;
        let sd = (delays.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (delays.len() - 1) as f64).sqrt();
        assert!((m - 2.0).abs() <= 3.0 * sd / (delays.len() as f64).sqrt());
        assert_eq!(st.mean_switch_delay, Some(m));
        let (one, _) = simulate_kappa_switch(&ce, &s, &s, 1.0, &AttackPolicy::fixed(spec), 100, 5).unwrap();
        assert!(one.mean_switch_delay.unwrap() <= 1.0);
    }
}
