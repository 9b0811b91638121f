//! Handover from σ1 to σ2 after the environment changes, the assumptions of
//! the randomized-switch bound, and its quantities ρ and κ.
//!
//! At the first augmented vertex `(v, m)` reached at or after the change:
//! - case a: some `(v, m')` attains σ2's value, and σ2 starts there;
//! - case b: otherwise walk a minimum-time path in G2 to the nearest vertex
//!   with such an `m'` and start σ2 there;
//! - case c: no such vertex is reachable.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalMode, Evaluator};
use crate::graph::{ChangingEnvironment, PatrollingGraph};
use crate::hole;
use crate::strategy::{support_reachable, transfer, AugLayout, AugmentedVertex, RegularStrategy};

/// Relative default tolerance for value comparisons (times `α_max`).
pub const DEFAULT_TOL: f64 = 1e-6;
/// Relative default tolerance for the zero self-hole check.
pub const DEFAULT_TOL_HOLE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchCase {
    A,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPlan {
    pub case: SwitchCase,
    /// Case a: memory element σ2 starts with at the current vertex.
    pub target_mem: Option<usize>,
    /// Case b: vertex path in G2 from the current vertex to the entry vertex.
    pub path: Option<Vec<usize>>,
    /// Augmented vertex where σ2 takes over (cases a and b).
    pub entry: Option<AugmentedVertex>,
    pub tolerance_used: f64,
}

/// Switch plans for every augmented vertex, computed once from σ2's
/// per-vertex values in G2.
#[derive(Debug, Clone)]
pub struct SwitchPlanner {
    layout: Arc<AugLayout>,
    per_vertex: Vec<f64>,
    dval: f64,
    tol: f64,
    plans: Vec<SwitchPlan>,
}

impl SwitchPlanner {
    /// `tol` defaults to `1e-6 · α_max(G2)`.
    pub fn new(sigma2: &RegularStrategy, g2: &PatrollingGraph, tol: Option<f64>) -> Result<Self> {
        let r = evaluate(sigma2, g2, EvalMode::BestInitial)?;
        let tol = tol.unwrap_or(DEFAULT_TOL * g2.alpha_max());
        let l = sigma2.layout.clone();
        let mem = l.mem;
        let nv = l.n_vertices;
        let dval = r.dval;
        let qualifies = |a: usize| r.per_vertex[a] >= dval - tol;
        // best qualifying m' per vertex: highest value, lowest index on ties
        let best_mem: Vec<Option<usize>> = (0..nv)
            .map(|v| {
                let mut best: Option<usize> = None;
                for m in 0..mem {
                    let a = v * mem + m;
                    if qualifies(a) && best.is_none_or(|b| r.per_vertex[a] > r.per_vertex[v * mem + b]) {
                        best = Some(m);
                    }
                }
                best
            })
            .collect();
        let mut plans = Vec::with_capacity(nv * mem);
        for v in 0..nv {
            let route = if best_mem[v].is_some() { None } else { nearest(g2, v, &best_mem) };
            for m in 0..mem {
                let plan = if let Some(bm) = best_mem[v] {
                    let m2 = if qualifies(v * mem + m) { m } else { bm };
                    SwitchPlan {
                        case: SwitchCase::A,
                        target_mem: Some(m2),
                        path: None,
                        entry: Some(AugmentedVertex { vertex: v, mem: m2 }),
                        tolerance_used: tol,
                    }
                } else if let Some(path) = &route {
                    let end = *path.last().expect("non-empty path");
                    SwitchPlan {
                        case: SwitchCase::B,
                        target_mem: None,
                        path: Some(path.clone()),
                        entry: Some(AugmentedVertex { vertex: end, mem: best_mem[end].expect("qualifying end") }),
                        tolerance_used: tol,
                    }
                } else {
                    SwitchPlan { case: SwitchCase::C, target_mem: None, path: None, entry: None, tolerance_used: tol }
                };
                plans.push(plan);
            }
        }
        Ok(Self { layout: l, per_vertex: r.per_vertex, dval, tol, plans })
    }

    pub fn plan(&self, v: AugmentedVertex) -> &SwitchPlan {
        &self.plans[self.layout.avx(v.vertex, v.mem)]
    }

    /// Plan by augmented vertex index.
    pub fn plan_at(&self, a: usize) -> &SwitchPlan {
        &self.plans[a]
    }

    pub fn per_vertex(&self) -> &[f64] {
        &self.per_vertex
    }

    /// σ2's value in G2 (best initial augmented vertex).
    pub fn dval(&self) -> f64 {
        self.dval
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn mem(&self) -> usize {
        self.layout.mem
    }

    /// True when some `(v, m')` attains σ2's value.
    pub fn vertex_qualifies(&self, v: usize) -> bool {
        let mem = self.layout.mem;
        (0..mem).any(|m| self.per_vertex[v * mem + m] >= self.dval - self.tol)
    }
}

/// Minimum-time path from `src` to the nearest other vertex with a qualifying
/// memory element. Ties prefer the lower vertex index, both for the
/// destination and for predecessors.
fn nearest(g: &PatrollingGraph, src: usize, best_mem: &[Option<usize>]) -> Option<Vec<usize>> {
    let n = g.n_vertices();
    let mut dist = vec![u64::MAX; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0;
    heap.push(Reverse((0u64, src)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u != src && best_mem[u].is_some() {
            let mut path = vec![u];
            let mut x = u;
            while x != src {
                x = pred[x];
                path.push(x);
            }
            path.reverse();
            return Some(path);
        }
        for &e in g.out_edges(u) {
            let w = g.edges()[e].to;
            let nd = d + g.edges()[e].time as u64;
            if nd < dist[w] || (nd == dist[w] && !done[w] && u < pred[w]) {
                dist[w] = nd;
                pred[w] = u;
                heap.push(Reverse((nd, w)));
            }
        }
    }
    None
}

fn same_mem(a: &RegularStrategy, b: &RegularStrategy) -> Result<()> {
    if a.mem_size() != b.mem_size() {
        return Err(Error::MemMismatch(a.mem_size(), b.mem_size()));
    }
    Ok(())
}

pub fn plan_switch(
    sigma1: &RegularStrategy,
    sigma2: &RegularStrategy,
    ce: &ChangingEnvironment,
    v: AugmentedVertex,
    tol: Option<f64>,
) -> Result<SwitchPlan> {
    same_mem(sigma1, sigma2)?;
    Ok(SwitchPlanner::new(sigma2, &ce.g2, tol)?.plan(v).clone())
}

// ---------------------------------------------------------------------------
// randomized-switch bound

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assumptions {
    /// (a) every support edge of σ1 exists in G2.
    pub edges_present: bool,
    /// (b) every vertex σ1 visits has an `m'` attaining σ2's value.
    pub per_vertex_value: bool,
    /// (c) switching from σ1 to itself opens no hole.
    pub self_hole_zero: bool,
}

impl Assumptions {
    pub fn all(&self) -> bool {
        self.edges_present && self.per_vertex_value && self.self_hole_zero
    }
}

/// `tol` defaults to `1e-6 · α_max(G2)`, `tol_hole` to `1e-9 · α_max`.
pub fn check_mitigation_assumptions(
    ce: &ChangingEnvironment,
    sigma1: &RegularStrategy,
    sigma2: &RegularStrategy,
    tol: Option<f64>,
    tol_hole: Option<f64>,
) -> Result<Assumptions> {
    same_mem(sigma1, sigma2)?;
    let on_g2 = transfer(sigma1, &ce.g1, &ce.g2);
    let edges_present = on_g2.is_ok();
    let planner = SwitchPlanner::new(sigma2, &ce.g2, tol)?;
    let all: Vec<usize> = (0..sigma1.layout.n_aug()).collect();
    let (visited, _) = support_reachable(sigma1, &all);
    let per_vertex_value = visited.iter().all(|&a| planner.vertex_qualifies(sigma1.layout.vertex_of(a)));
    let self_hole_zero = match on_g2 {
        Ok(s) => {
            let tol_hole = tol_hole.unwrap_or(DEFAULT_TOL_HOLE * ce.alpha_max());
            hole::estimate_hole(ce, sigma1, &s)?.hole_ub <= tol_hole
        }
        Err(_) => false,
    };
    Ok(Assumptions { edges_present, per_vertex_value, self_hole_zero })
}

/// `max{0, AVal_G2(σ1) − max(AVal_G1(σ1), AVal_G2(σ2))}`.
pub fn rho(ce: &ChangingEnvironment, sigma1: &RegularStrategy, sigma2: &RegularStrategy) -> Result<f64> {
    same_mem(sigma1, sigma2)?;
    let s1_g2 = transfer(sigma1, &ce.g1, &ce.g2)?;
    let a11 = evaluate(sigma1, &ce.g1, EvalMode::AllSupport)?.aval;
    let a12 = Evaluator::new(&ce.g2, s1_g2.layout.clone())?.evaluate(&s1_g2.probs, EvalMode::AllSupport).aval;
    let a22 = evaluate(sigma2, &ce.g2, EvalMode::AllSupport)?.aval;
    Ok((a12 - a11.max(a22)).max(0.0))
}

pub fn hole_bound(rho: f64, kappa: f64, d_max: u32, alpha_max2: f64) -> f64 {
    rho + (1.0 - (1.0 - kappa).powi(d_max as i32)) * alpha_max2
}

pub fn switch_time_bound(max_time2: u32, kappa: f64) -> f64 {
    max_time2 as f64 / kappa
}

/// Largest switch probability whose hole bound stays within `budget`.
pub fn kappa_for_budget(rho: f64, budget: f64, d_max: u32, alpha_max2: f64) -> Result<f64> {
    if !(budget > rho) {
        return Err(Error::Infeasible(format!("hole budget {budget} must exceed rho {rho}")));
    }
    if !(alpha_max2 > 0.0) || d_max < 1 {
        return Err(Error::Config("need alpha_max2 > 0 and d_max ≥ 1".into()));
    }
    let x = (budget - rho) / alpha_max2;
    if x >= 1.0 {
        return Ok(1.0);
    }
    let mut kappa = -((-x).ln_1p() / d_max as f64).exp_m1();
    kappa = kappa.min(1.0);
    while kappa > 0.0 && hole_bound(rho, kappa, d_max, alpha_max2) > budget {
        kappa = kappa.next_down();
    }
    if kappa <= 0.0 {
        return Err(Error::Infeasible("no positive switch probability meets the budget".into()));
    }
    Ok(kappa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub rho: f64,
    pub kappa: f64,
    pub expected_switch_time_bound: f64,
    pub hole_bound: f64,
    pub assumptions: Assumptions,
    pub hole_budget: f64,
    pub d_max: u32,
    pub alpha_max2: f64,
    pub max_time2: u32,
}

pub fn mitigation_report(
    ce: &ChangingEnvironment,
    sigma1: &RegularStrategy,
    sigma2: &RegularStrategy,
    hole_budget: f64,
    tol: Option<f64>,
) -> Result<MitigationReport> {
    let assumptions = check_mitigation_assumptions(ce, sigma1, sigma2, tol, None)?;
    let rho = rho(ce, sigma1, sigma2)?;
    let d_max = ce.g2.d_max();
    let alpha_max2 = ce.g2.alpha_max();
    let max_time2 = ce.g2.max_time();
    let kappa = kappa_for_budget(rho, hole_budget, d_max, alpha_max2)?;
    Ok(MitigationReport {
        rho,
        kappa,
        expected_switch_time_bound: switch_time_bound(max_time2, kappa),
        hole_bound: hole_bound(rho, kappa, d_max, alpha_max2),
        assumptions,
        hole_budget,
        d_max,
        alpha_max2,
        max_time2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn tri_env() -> ChangingEnvironment {
        ChangingEnvironment::new(scenarios::triangle_g1(), scenarios::triangle_g2()).unwrap()
    }

    #[test]
    fn perfect_cycle_switches_in_place() {
        let ce = tri_env();
        let (s1, s2) = (scenarios::triangle_sigma1(), scenarios::triangle_sigma2());
        for v in 0..3 {
            let p = plan_switch(&s1, &s2, &ce, AugmentedVertex { vertex: v, mem: 0 }, None).unwrap();
            assert_eq!(p.case, SwitchCase::A);
            assert_eq!(p.target_mem, Some(0));
        }
    }

    #[test]
    fn transient_memory_switches_to_best_mem() {
        // two memory elements: mem 0 runs the perfect clockwise cycle, mem 1
        // idles between v1 and v2 and so never protects v3
        let g = scenarios::triangle_g1();
        let s2 = RegularStrategy::deterministic(&g, 2, |a| {
            if a.mem == 0 {
                AugmentedVertex { vertex: (a.vertex + 1) % 3, mem: 0 }
            } else {
                AugmentedVertex { vertex: if a.vertex == 0 { 1 } else { 0 }, mem: 1 }
            }
        })
        .unwrap();
        let planner = SwitchPlanner::new(&s2, &g, None).unwrap();
        assert_eq!(planner.dval(), 100.0);
        let p = planner.plan(AugmentedVertex { vertex: 0, mem: 1 });
        assert_eq!(p.case, SwitchCase::A);
        assert_eq!(p.target_mem, Some(0));
        let p = planner.plan(AugmentedVertex { vertex: 2, mem: 0 });
        assert_eq!((p.case, p.target_mem), (SwitchCase::A, Some(0)));
    }

    #[test]
    fn case_b_follows_fastest_route() {
        // the b/c cycle is perfect; every state at a falls into the a/c loop
        let src = r#"{"vertices":["a","b","c"],
            "targets":[{"id":"b","d":4,"alpha":10},{"id":"c","d":4,"alpha":10}],
            "edges":[{"from":"a","to":"b","time":3},{"from":"a","to":"c","time":1},{"from":"c","to":"b","time":1},
                     {"from":"b","to":"c","time":2},{"from":"c","to":"a","time":1},{"from":"b","to":"a","time":1}]}"#;
        let g = crate::graph::load_graph(src.as_bytes()).unwrap();
        let id = |n: &str| g.vertex(n).unwrap();
        // mem 0: b <-> c cycle (perfect), mem 1 at a: a -> c (mem 1) -> a (mem 1) loop misses b
        let s = RegularStrategy::deterministic(&g, 2, |x| {
            let (a, b, c) = (id("a"), id("b"), id("c"));
            match (x.vertex, x.mem) {
                (v, 0) if v == b => AugmentedVertex { vertex: c, mem: 0 },
                (v, 0) if v == c => AugmentedVertex { vertex: b, mem: 0 },
                (v, 0) if v == a => AugmentedVertex { vertex: c, mem: 1 },
                (v, _) if v == a => AugmentedVertex { vertex: c, mem: 1 },
                (v, _) if v == c => AugmentedVertex { vertex: a, mem: 1 },
                _ => AugmentedVertex { vertex: a, mem: 1 },
            }
        })
        .unwrap();
        let planner = SwitchPlanner::new(&s, &g, None).unwrap();
        let p = planner.plan(AugmentedVertex { vertex: id("a"), mem: 1 });
        assert_eq!(p.case, SwitchCase::B);
        // c is reachable in time 1 and already qualifies
        assert_eq!(p.path.as_deref(), Some(&[id("a"), id("c")][..]));
        assert_eq!(p.entry, Some(AugmentedVertex { vertex: id("c"), mem: 0 }));
    }

    #[test]
    fn assumptions_on_triangle() {
        let ce = tri_env();
        let a = check_mitigation_assumptions(&ce, &scenarios::triangle_sigma1(), &scenarios::triangle_sigma2(), None, None)
            .unwrap();
        assert!(!a.edges_present);
        assert!(!a.self_hole_zero);
        let g1 = scenarios::triangle_g1();
        let same = ChangingEnvironment::new(g1.clone(), g1).unwrap();
        let s1 = scenarios::triangle_sigma1();
        let a = check_mitigation_assumptions(&same, &s1, &s1, None, None).unwrap();
        assert!(a.all());
        assert_eq!(rho(&same, &s1, &s1).unwrap(), 0.0);
        assert!(rho(&ce, &s1, &scenarios::triangle_sigma2()).is_err());
    }

    #[test]
    fn kappa_inversion() {
        let k = kappa_for_budget(1.2, 2.2, 64, 100.0).unwrap();
        let exact = 1.0 - 0.99f64.powf(1.0 / 64.0);
        assert!((k - exact).abs() < 1e-12);
        assert!((k - 1.5705e-4).abs() < 1e-7);
        assert!(hole_bound(1.2, k, 64, 100.0) <= 2.2);
        assert_eq!(kappa_for_budget(0.0, 150.0, 10, 100.0).unwrap(), 1.0);
        assert!(kappa_for_budget(2.0, 2.0, 10, 100.0).is_err());
        let tiny = kappa_for_budget(0.0, 1e-300, 64, 100.0).unwrap();
        assert!(tiny > 0.0 && (tiny / (1e-302 / 64.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_are_monotone_in_kappa() {
        let ks = [1e-4, 1e-3, 0.01, 0.05, 0.1];
        for w in ks.windows(2) {
            assert!(hole_bound(1.0, w[0], 64, 100.0) < hole_bound(1.0, w[1], 64, 100.0));
            assert!(switch_time_bound(16, w[0]) > switch_time_bound(16, w[1]));
        }
    }
}
