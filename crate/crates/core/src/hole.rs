//! Upper bounds on the security hole of switching from σ1 to σ2.
//!
//! For an initial augmented edge `ê0` of σ1 and a target τ, the forward search
//! follows σ1 (with G1 travel times) level by level in arrival time. At level
//! `ℓ` the heap holds every walk still in flight that has not visited τ; a
//! change at `Δt = ℓ` makes each of them switch on arrival, after which σ2
//! catches τ in time with probability `p_catch`. The largest level value is
//! the worst steal over all change times for that pair.
//!
//! Mass that reaches `d(τ)` without visiting τ is kept as a certain miss for
//! all later levels, and a final level covers change times after the last
//! arrival. Together these make the search equal to the maximum over
//! `Δt ∈ [1, d(τ)]` of the exact switch steal with zero delay.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalMode};
use crate::graph::{ChangingEnvironment, PatrollingGraph};
use crate::strategy::{fmt_f64, AugmentedVertex, RegularStrategy};
use crate::switcher::{SwitchCase, SwitchPlanner};

/// Heap entries below this probability are dropped.
pub const PRUNE: f64 = 1e-15;

/// Per-augmented-vertex first-visit times of τ under σ2 in G2, with running
/// prefix sums. Each bucket starts with the sentinel `(-1, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CatchOracle {
    pub target: usize,
    pub attack_time: u32,
    pub mem: usize,
    pub buckets: Vec<Vec<(i64, f64)>>,
    /// Mass dropped by pruning; catches are under-counted by at most this.
    pub pruned_mass: f64,
}

impl CatchOracle {
    pub fn bucket(&self, v: AugmentedVertex) -> &[(i64, f64)] {
        &self.buckets[v.vertex * self.mem + v.mem]
    }

    /// Probability of visiting τ from augmented vertex `a` within
    /// `d(τ) − t_arrive`.
    pub fn query(&self, a: usize, t_arrive: i64) -> f64 {
        let budget = self.attack_time as i64 - t_arrive;
        if budget < 0 {
            return 0.0;
        }
        let b = &self.buckets[a];
        let i = b.partition_point(|e| e.0 <= budget);
        b[i - 1].1
    }
}

pub fn query_catch(o: &CatchOracle, v: AugmentedVertex, t_arrive: i64) -> f64 {
    o.query(v.vertex * o.mem + v.mem, t_arrive)
}

/// Backward search from τ along reversed σ2 support edges with G2 times.
pub fn build_catch_oracle(g2: &PatrollingGraph, sigma2: &RegularStrategy, target: usize) -> Result<CatchOracle> {
    let k = g2.target_index(target).ok_or_else(|| Error::NotATarget(g2.name(target).to_string()))?;
    let l = &*sigma2.layout;
    if !l.matches(g2) {
        return Err(Error::TopologyMismatch);
    }
    let d = g2.targets()[k].attack_time as usize;
    let nav = l.n_aug();
    let time = l.slot_times(g2);
    let mut mass = vec![0.0; (d + 1) * nav];
    let mut heap = BinaryHeap::new();
    let mut buckets: Vec<Vec<(i64, f64)>> = vec![vec![(-1, 0.0)]; nav];
    let mut pruned = 0.0;
    for m in 0..l.mem {
        let a = l.avx(target, m);
        mass[a] = 1.0;
        heap.push(Reverse((0usize, a)));
    }
    while let Some(Reverse((t, a))) = heap.pop() {
        let p = std::mem::take(&mut mass[t * nav + a]);
        if p < PRUNE {
            pruned += p;
            continue;
        }
        let b = &mut buckets[a];
        let prev = b.last().expect("sentinel").1;
        b.push((t as i64, prev + p));
        for &s in l.in_slots(a) {
            let q = sigma2.probs[s];
            let pred = l.slot_src[s];
            if q == 0.0 || l.vertex_of(pred) == target {
                continue;
            }
            let t2 = t + time[s] as usize;
            if t2 > d {
                continue;
            }
            let cell = &mut mass[t2 * nav + pred];
            if *cell == 0.0 {
                heap.push(Reverse((t2, pred)));
            }
            *cell += p * q;
        }
    }
    Ok(CatchOracle { target, attack_time: d as u32, mem: l.mem, buckets, pruned_mass: pruned })
}

/// Catch probability by a direct forward search from `v` (slow cross-check
/// for `query_catch`).
pub fn catch_naive(g2: &PatrollingGraph, sigma2: &RegularStrategy, target: usize, v: AugmentedVertex, t_arrive: i64) -> Result<f64> {
    let k = g2.target_index(target).ok_or_else(|| Error::NotATarget(g2.name(target).to_string()))?;
    let l = &*sigma2.layout;
    let budget = g2.targets()[k].attack_time as i64 - t_arrive;
    if budget < 0 {
        return Ok(0.0);
    }
    if v.vertex == target {
        return Ok(1.0);
    }
    let budget = budget as usize;
    let nav = l.n_aug();
    let time = l.slot_times(g2);
    let mut mass = vec![0.0; (budget + 1) * nav];
    let mut heap = BinaryHeap::new();
    let a0 = l.avx(v.vertex, v.mem);
    mass[a0] = 1.0;
    heap.push(Reverse((0usize, a0)));
    let mut caught = 0.0;
    while let Some(Reverse((t, a))) = heap.pop() {
        let p = std::mem::take(&mut mass[t * nav + a]);
        for s in l.row(a) {
            let q = sigma2.probs[s];
            if q == 0.0 {
                continue;
            }
            let t2 = t + time[s] as usize;
            if t2 > budget {
                continue;
            }
            let b = l.slot_dst[s];
            if l.vertex_of(b) == target {
                caught += p * q;
                continue;
            }
            let cell = &mut mass[t2 * nav + b];
            if *cell == 0.0 {
                heap.push(Reverse((t2, b)));
            }
            *cell += p * q;
        }
    }
    Ok(caught)
}

/// Support slots of σ1 kept by the longest-incoming-edge dominance, crossed
/// with every target, in slot-then-target order.
pub fn eligible_pairs(g1: &PatrollingGraph, sigma1: &RegularStrategy) -> Vec<(usize, usize)> {
    eligible_slots(g1, sigma1)
        .into_iter()
        .flat_map(|s| (0..g1.targets().len()).map(move |k| (s, k)))
        .collect()
}

fn eligible_slots(g1: &PatrollingGraph, sigma1: &RegularStrategy) -> Vec<usize> {
    let l = &*sigma1.layout;
    let time = l.slot_times(g1);
    let mut keep: Vec<Option<usize>> = vec![None; l.n_aug()];
    for s in sigma1.support() {
        let d = l.slot_dst[s];
        if keep[d].is_none_or(|k| time[s] > time[k]) {
            keep[d] = Some(s);
        }
    }
    let mut out: Vec<usize> = keep.into_iter().flatten().collect();
    out.sort_unstable();
    out
}

/// Worst steal of one `(ê0, τ)` pair over all change times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSteal {
    pub slot: usize,
    pub target: usize,
    pub steal: f64,
    /// Change time (relative to the start of `ê0`) attaining the maximum.
    pub delta_t: u32,
}

/// Catch probability after switching at each σ1 augmented vertex, per arrival
/// time `t` in `0..=d`: `pc[t * n_aug + a]`.
struct EntryCatch {
    pc: Vec<f64>,
    case_c: usize,
}

fn entry_catch(oracle: &CatchOracle, planner: &SwitchPlanner, g2: &PatrollingGraph) -> EntryCatch {
    let d = oracle.attack_time as usize;
    let nav = oracle.buckets.len();
    let mem = oracle.mem;
    let mut pc = vec![0.0; (d + 1) * nav];
    let mut case_c = 0;
    for a in 0..nav {
        let plan = planner.plan_at(a);
        match plan.case {
            SwitchCase::A => {
                let e = plan.entry.expect("case a entry");
                let ea = e.vertex * mem + e.mem;
                for t in 0..=d {
                    pc[t * nav + a] = oracle.query(ea, t as i64);
                }
            }
            SwitchCase::B => {
                let path = plan.path.as_ref().expect("case b path");
                let e = plan.entry.expect("case b entry");
                let ea = e.vertex * mem + e.mem;
                let mut cum = 0i64;
                let mut hit: Option<i64> = None;
                for w in path.windows(2) {
                    let eid = g2.edge_id(w[0], w[1]).expect("path edge in G2");
                    cum += g2.edges()[eid].time as i64;
                    if w[1] == oracle.target && hit.is_none() {
                        hit = Some(cum);
                    }
                }
                for t in 0..=d {
                    let ti = t as i64;
                    pc[t * nav + a] = match hit {
                        Some(h) if ti + h <= d as i64 => 1.0,
                        _ => oracle.query(ea, ti + cum),
                    };
                }
            }
            // no handover possible: treated as never catching
            SwitchCase::C => case_c += 1,
        }
    }
    EntryCatch { pc, case_c }
}

struct Scratch {
    mass: Vec<f64>,
    heap: BinaryHeap<Reverse<(usize, usize)>>,
}

struct PairCtx<'a> {
    g1: &'a PatrollingGraph,
    sigma1: &'a RegularStrategy,
    time1: &'a [u32],
    target: usize,
    target_index: usize,
    d: usize,
    alpha: f64,
    entry: &'a EntryCatch,
}

/// Returns the pair steal and the probability mass dropped by pruning.
fn forward_pair(ctx: &PairCtx, slot0: usize, scratch: &mut Scratch) -> (PairSteal, f64) {
    let l = &*ctx.sigma1.layout;
    let nav = l.n_aug();
    let t0 = ctx.time1[slot0] as usize;
    let dst = l.slot_dst[slot0];
    let d = ctx.d;
    let alpha = ctx.alpha;
    let mut out = PairSteal { slot: slot0, target: ctx.target_index, steal: 0.0, delta_t: 1 };
    if l.vertex_of(dst) == ctx.target {
        if t0 > d {
            out.steal = alpha;
        }
        return (out, 0.0);
    }
    if t0 > d {
        out.steal = alpha;
        return (out, 0.0);
    }
    let _ = ctx.g1;
    let pc = &ctx.entry.pc;
    let mass = &mut scratch.mass;
    let heap = &mut scratch.heap;
    heap.clear();
    let mut lost = 0.0;
    let mut pruned = 0.0;
    // Σ over in-flight mass of p · (1 − p_catch at its arrival)
    let mut pending = 0.0;
    mass[t0 * nav + dst] = 1.0;
    heap.push(Reverse((t0, dst)));
    pending += 1.0 - pc[t0 * nav + dst];

    while let Some(&Reverse((level, _))) = heap.peek() {
        let value = alpha * (lost + pending.max(0.0)).min(1.0);
        if value > out.steal {
            out.steal = value;
            out.delta_t = level as u32;
        }
        while let Some(&Reverse((t, a))) = heap.peek() {
            if t != level {
                break;
            }
            heap.pop();
            let p = std::mem::take(&mut mass[t * nav + a]);
            pending -= p * (1.0 - pc[t * nav + a]);
            if p < PRUNE {
                lost += p;
                pruned += p;
                continue;
            }
            for s in l.row(a) {
                let q = ctx.sigma1.probs[s];
                if q == 0.0 {
                    continue;
                }
                let t2 = t + ctx.time1[s] as usize;
                let b = l.slot_dst[s];
                if t2 > d {
                    lost += p * q;
                } else if l.vertex_of(b) == ctx.target {
                    // caught before the attack completes
                } else {
                    let cell = &mut mass[t2 * nav + b];
                    if *cell == 0.0 {
                        heap.push(Reverse((t2, b)));
                    }
                    *cell += p * q;
                    pending += p * q * (1.0 - pc[t2 * nav + b]);
                }
            }
        }
    }
    // change times after the last arrival: only the certain misses remain
    let tail = alpha * lost.min(1.0);
    if tail > out.steal {
        out.steal = tail;
        out.delta_t = d as u32;
    }
    (out, pruned)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoleReport {
    pub aval1: f64,
    pub aval2: f64,
    pub ub: f64,
    pub hole_ub: f64,
    pub worst: Option<PairSteal>,
    pub pairs: Vec<PairSteal>,
    /// Probability mass dropped by pruning (forward searches and oracles).
    pub pruned_mass: f64,
    /// Augmented vertices of σ1 for which no handover exists.
    pub case_c_states: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HoleOptions {
    /// Switch tolerance; defaults to `1e-6 · α_max(G2)`.
    pub tol: Option<f64>,
    /// Answer catch queries by direct forward search instead of the oracle.
    pub naive: bool,
}

fn check_env(ce: &ChangingEnvironment, sigma1: &RegularStrategy, sigma2: &RegularStrategy) -> Result<()> {
    if sigma1.mem_size() != sigma2.mem_size() {
        return Err(Error::MemMismatch(sigma1.mem_size(), sigma2.mem_size()));
    }
    if !sigma1.layout.matches(&ce.g1) || !sigma2.layout.matches(&ce.g2) {
        return Err(Error::TopologyMismatch);
    }
    Ok(())
}

/// Worst steal of `(ê0, τ)` over all change times.
pub fn max_steal_forward(
    ce: &ChangingEnvironment,
    sigma1: &RegularStrategy,
    sigma2: &RegularStrategy,
    slot0: usize,
    target: usize,
    oracle: &CatchOracle,
) -> Result<PairSteal> {
    check_env(ce, sigma1, sigma2)?;
    if oracle.target != target {
        return Err(Error::Strategy("catch oracle was built for another target".into()));
    }
    if sigma1.probs.get(slot0).is_none_or(|&p| p <= 0.0) {
        return Err(Error::Strategy("initial edge is not in the support of σ1".into()));
    }
    let k = ce.g2.target_index(target).ok_or_else(|| Error::NotATarget(ce.g2.name(target).to_string()))?;
    let planner = SwitchPlanner::new(sigma2, &ce.g2, None)?;
    let entry = entry_catch(oracle, &planner, &ce.g2);
    let time1 = sigma1.layout.slot_times(&ce.g1);
    let ctx = PairCtx {
        g1: &ce.g1,
        sigma1,
        time1: &time1,
        target,
        target_index: k,
        d: oracle.attack_time as usize,
        alpha: ce.g2.targets()[k].cost,
        entry: &entry,
    };
    let nav = sigma1.layout.n_aug();
    let mut scratch = Scratch { mass: vec![0.0; (ctx.d + 1) * nav], heap: BinaryHeap::new() };
    Ok(forward_pair(&ctx, slot0, &mut scratch).0)
}

pub fn estimate_hole(ce: &ChangingEnvironment, sigma1: &RegularStrategy, sigma2: &RegularStrategy) -> Result<HoleReport> {
    estimate_hole_with(ce, sigma1, sigma2, HoleOptions::default())
}

pub fn estimate_hole_with(
    ce: &ChangingEnvironment,
    sigma1: &RegularStrategy,
    sigma2: &RegularStrategy,
    opts: HoleOptions,
) -> Result<HoleReport> {
    check_env(ce, sigma1, sigma2)?;
    let aval1 = evaluate(sigma1, &ce.g1, EvalMode::AllSupport)?.aval;
    let aval2 = evaluate(sigma2, &ce.g2, EvalMode::AllSupport)?.aval;
    let planner = SwitchPlanner::new(sigma2, &ce.g2, opts.tol)?;
    let slots = eligible_slots(&ce.g1, sigma1);
    let time1 = sigma1.layout.slot_times(&ce.g1);
    let nav = sigma1.layout.n_aug();

    let per_target: Vec<Result<(Vec<PairSteal>, f64, usize)>> = (0..ce.g2.targets().len())
        .into_par_iter()
        .map(|k| {
            let tg = ce.g2.targets()[k];
            let mut oracle = build_catch_oracle(&ce.g2, sigma2, tg.vertex)?;
            if opts.naive {
                oracle = naive_oracle(&ce.g2, sigma2, tg.vertex)?;
            }
            let entry = entry_catch(&oracle, &planner, &ce.g2);
            let ctx = PairCtx {
                g1: &ce.g1,
                sigma1,
                time1: &time1,
                target: tg.vertex,
                target_index: k,
                d: tg.attack_time as usize,
                alpha: tg.cost,
                entry: &entry,
            };
            let mut scratch = Scratch { mass: vec![0.0; (ctx.d + 1) * nav], heap: BinaryHeap::new() };
            let mut pruned = oracle.pruned_mass;
            let mut out = Vec::with_capacity(slots.len());
            for &s in &slots {
                let (ps, pr) = forward_pair(&ctx, s, &mut scratch);
                pruned += pr;
                out.push(ps);
            }
            Ok((out, pruned, entry.case_c))
        })
        .collect();

    let nt = ce.g2.targets().len();
    let mut by_target = Vec::with_capacity(nt);
    let mut pruned_mass = 0.0;
    let mut case_c_states = 0;
    for r in per_target {
        let (v, p, c) = r?;
        pruned_mass += p;
        case_c_states = case_c_states.max(c);
        by_target.push(v);
    }
    let mut pairs = Vec::with_capacity(slots.len() * nt);
    for i in 0..slots.len() {
        for v in &by_target {
            pairs.push(v[i]);
        }
    }
    let mut worst: Option<PairSteal> = None;
    for p in &pairs {
        if worst.is_none_or(|w| p.steal > w.steal) {
            worst = Some(*p);
        }
    }
    let base = aval1.max(aval2);
    let ub = worst.map_or(base, |w| base.max(w.steal));
    Ok(HoleReport { aval1, aval2, ub, hole_ub: (ub - base).max(0.0), worst, pairs, pruned_mass, case_c_states })
}

/// Oracle whose buckets are filled from direct forward searches.
fn naive_oracle(g2: &PatrollingGraph, sigma2: &RegularStrategy, target: usize) -> Result<CatchOracle> {
    let k = g2.target_index(target).ok_or_else(|| Error::NotATarget(g2.name(target).to_string()))?;
    let d = g2.targets()[k].attack_time as i64;
    let l = &*sigma2.layout;
    let mut buckets = Vec::with_capacity(l.n_aug());
    for a in 0..l.n_aug() {
        let v = l.aug(a);
        let mut b = vec![(-1i64, 0.0)];
        let mut prev = 0.0;
        for budget in 0..=d {
            let c = catch_naive(g2, sigma2, target, v, d - budget)?;
            if c > prev {
                b.push((budget, c));
                prev = c;
            }
        }
        buckets.push(b);
    }
    Ok(CatchOracle { target, attack_time: d as u32, mem: l.mem, buckets, pruned_mass: 0.0 })
}

// ---------------------------------------------------------------------------
// export

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJson {
    pub edge: [(String, usize); 2],
    pub target: String,
    pub steal: f64,
    pub delta_t: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleReportJson {
    pub aval1: f64,
    pub aval2: f64,
    pub ub: f64,
    pub hole_ub: f64,
    pub worst: Option<PairJson>,
    pub pairs: Vec<PairJson>,
    pub pruned_mass: f64,
    pub case_c_states: usize,
}

fn pair_json(p: &PairSteal, s: &RegularStrategy, g: &PatrollingGraph) -> PairJson {
    let l = &s.layout;
    let named = |a: usize| {
        let x = l.aug(a);
        (g.name(x.vertex).to_string(), x.mem)
    };
    PairJson {
        edge: [named(l.slot_src[p.slot]), named(l.slot_dst[p.slot])],
        target: g.name(g.targets()[p.target].vertex).to_string(),
        steal: p.steal,
        delta_t: p.delta_t,
    }
}

/// Report with named edges; `sigma1` and `g1` resolve slot indices.
pub fn report_json(r: &HoleReport, sigma1: &RegularStrategy, g1: &PatrollingGraph) -> HoleReportJson {
    HoleReportJson {
        aval1: r.aval1,
        aval2: r.aval2,
        ub: r.ub,
        hole_ub: r.hole_ub,
        worst: r.worst.as_ref().map(|p| pair_json(p, sigma1, g1)),
        pairs: r.pairs.iter().map(|p| pair_json(p, sigma1, g1)).collect(),
        pruned_mass: r.pruned_mass,
        case_c_states: r.case_c_states,
    }
}

pub fn pairs_csv(r: &HoleReport, sigma1: &RegularStrategy, g1: &PatrollingGraph) -> String {
    let mut out = String::from("src_vertex,src_mem,dst_vertex,dst_mem,target,steal,delta_t\n");
    for p in &r.pairs {
        let j = pair_json(p, sigma1, g1);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            j.edge[0].0,
            j.edge[0].1,
            j.edge[1].0,
            j.edge[1].1,
            j.target,
            fmt_f64(j.steal),
            j.delta_t
        );
    }
    out
}
