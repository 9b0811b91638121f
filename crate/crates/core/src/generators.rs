//! Scenario generators: multi-floor buildings, random city graphs, and
//! seeded environment changes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::{Edge, PatrollingGraph, Target};
use crate::rng;
use crate::scc;

/// Building with `floors` floors of 4 corridor vertices and 10 offices each.
///
/// Corridor moves take 2, office moves 5, stairs 10. Stairs join corridor
/// positions 1 and 4 of adjacent floors. Every office is a target with cost
/// 100 and attack time 100 per floor.
pub fn gen_building(floors: usize) -> Result<PatrollingGraph, GraphError> {
    if floors < 1 {
        return Err(GraphError::Infeasible("floors must be ≥ 1".into()));
    }
    let d = 100 * floors as u32;
    let mut names = Vec::with_capacity(14 * floors);
    let mut targets = Vec::new();
    let mut edges = Vec::new();
    let both = |edges: &mut Vec<Edge>, a: usize, b: usize, time: u32| {
        edges.push(Edge { from: a, to: b, time });
        edges.push(Edge { from: b, to: a, time });
    };
    let mut corridor = Vec::with_capacity(floors);
    for f in 1..=floors {
        let base = names.len();
        for k in 1..=4 {
            names.push(format!("f{f}c{k}"));
        }
        let c: Vec<usize> = (base..base + 4).collect();
        for k in 0..3 {
            both(&mut edges, c[k], c[k + 1], 2);
        }
        let mut office = |name: String, at: usize, names: &mut Vec<String>, edges: &mut Vec<Edge>| {
            let v = names.len();
            names.push(name);
            targets.push(Target { vertex: v, attack_time: d, cost: 100.0 });
            both(edges, at, v, 5);
        };
        for k in 0..4 {
            office(format!("f{f}o{}n", k + 1), c[k], &mut names, &mut edges);
            office(format!("f{f}o{}s", k + 1), c[k], &mut names, &mut edges);
        }
        office(format!("f{f}w"), c[0], &mut names, &mut edges);
        office(format!("f{f}e"), c[3], &mut names, &mut edges);
        corridor.push(c);
    }
    for f in 1..floors {
        both(&mut edges, corridor[f - 1][0], corridor[f][0], 10);
        both(&mut edges, corridor[f - 1][3], corridor[f][3], 10);
    }
    PatrollingGraph::new(names, targets, edges)
}

/// Parameters of the random city generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityParams {
    pub n_targets: usize,
    pub n_edges: usize,
    pub cost_lo: f64,
    pub cost_hi: f64,
    pub attack_time: u32,
    pub time_lo: u32,
    pub time_hi: u32,
    pub seed: u64,
}

impl CityParams {
    pub fn new(n_targets: usize, n_edges: usize, cost_lo: f64, cost_hi: f64, attack_time: u32, seed: u64) -> Self {
        Self {
            n_targets,
            n_edges,
            cost_lo,
            cost_hi,
            attack_time,
            time_lo: 1,
            time_hi: 16,
            seed,
        }
    }
}

pub fn gen_city(n_targets: usize, n_edges: usize, cost_lo: f64, cost_hi: f64, attack_time: u32, seed: u64) -> Result<PatrollingGraph, GraphError> {
    gen_city_with(&CityParams::new(n_targets, n_edges, cost_lo, cost_hi, attack_time, seed))
}

/// Random strongly connected city graph where every vertex is a target.
///
/// A random Hamiltonian cycle guarantees strong connectivity; the remaining
/// edges are distinct random pairs. Edges are emitted sorted by endpoints.
pub fn gen_city_with(p: &CityParams) -> Result<PatrollingGraph, GraphError> {
    let n = p.n_targets;
    if n < 2 {
        return Err(GraphError::Infeasible("n_targets must be ≥ 2".into()));
    }
    if p.n_edges < n || p.n_edges > n * (n - 1) {
        return Err(GraphError::Infeasible(format!("n_edges must lie in [{}, {}]", n, n * (n - 1))));
    }
    if !(p.cost_lo > 0.0 && p.cost_lo <= p.cost_hi && p.cost_hi.is_finite()) {
        return Err(GraphError::Infeasible("need 0 < cost_lo ≤ cost_hi".into()));
    }
    if p.time_lo < 1 || p.time_lo > p.time_hi {
        return Err(GraphError::Infeasible("need 1 ≤ time_lo ≤ time_hi".into()));
    }
    if p.attack_time < 1 {
        return Err(GraphError::Infeasible("attack_time must be ≥ 1".into()));
    }
    let mut r = rng::rng(p.seed, 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut chosen = vec![false; n * n];
    let mut pairs = Vec::with_capacity(p.n_edges);
    for i in 0..n {
        let (a, b) = (order[i], order[(i + 1) % n]);
        chosen[a * n + b] = true;
        pairs.push((a, b));
    }
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && !chosen[a * n + b])
        .collect();
    rest.shuffle(&mut r);
    pairs.extend(rest.into_iter().take(p.n_edges - n));
    pairs.sort_unstable();
    let edges = pairs
        .into_iter()
        .map(|(from, to)| Edge {
            from,
            to,
            time: r.random_range(p.time_lo..=p.time_hi),
        })
        .collect();
    let names = (0..n).map(|i| format!("L{i:02}")).collect();
    let targets = (0..n)
        .map(|v| Target {
            vertex: v,
            attack_time: p.attack_time,
            cost: if p.cost_lo == p.cost_hi { p.cost_lo } else { r.random_range(p.cost_lo..=p.cost_hi) },
        })
        .collect();
    PatrollingGraph::new(names, targets, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Utility,
    EdgeLength,
    EdgeRemoval,
}

/// A seeded environment change of size `cs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    pub kind: ChangeKind,
    pub cs: f64,
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_retries() -> usize {
    1000
}

impl ChangeSpec {
    pub fn new(kind: ChangeKind, cs: f64, seed: u64) -> Self {
        Self { kind, cs, seed, retries: default_retries() }
    }
}

/// Scale factor drawn with probability 1/3 each: up, down, unchanged.
fn scale<R: Rng>(r: &mut R, cs: f64) -> f64 {
    match r.random_range(0..3u8) {
        0 => 1.0 + cs / 100.0,
        1 => 1.0 - cs / 100.0,
        _ => 1.0,
    }
}

pub fn apply_change(g: &PatrollingGraph, spec: &ChangeSpec) -> Result<PatrollingGraph, GraphError> {
    if !(spec.cs >= 0.0 && spec.cs.is_finite()) {
        return Err(GraphError::Infeasible("change size must be ≥ 0".into()));
    }
    let mut r = rng::rng(spec.seed, 0);
    match spec.kind {
        ChangeKind::Utility => {
            let costs: Vec<f64> = g.targets().iter().map(|t| t.cost * scale(&mut r, spec.cs)).collect();
            g.with_costs(&costs)
        }
        ChangeKind::EdgeLength => {
            let edges = g
                .edges()
                .iter()
                .map(|e| {
                    let scaled = e.time as f64 * scale(&mut r, spec.cs);
                    Edge { time: ((scaled + 0.5).floor() as u32).max(1), ..*e }
                })
                .collect();
            g.with_edges(edges)
        }
        ChangeKind::EdgeRemoval => {
            if spec.cs.fract() != 0.0 {
                return Err(GraphError::Infeasible("removal count must be an integer".into()));
            }
            let k = spec.cs as usize;
            let m = g.edges().len();
            if k > m {
                return Err(GraphError::Infeasible(format!("cannot remove {k} of {m} edges")));
            }
            let mut ids: Vec<usize> = (0..m).collect();
            for _ in 0..spec.retries.max(1) {
                let (picked, _) = ids.partial_shuffle(&mut r, k);
                let mut drop = vec![false; m];
                for &i in picked.iter() {
                    drop[i] = true;
                }
                let edges: Vec<Edge> = g.edges().iter().enumerate().filter(|(i, _)| !drop[*i]).map(|(_, e)| *e).collect();
                let cand = g.with_edges(edges)?;
                if scc::strongly_connected(&cand.adjacency()) {
                    return Ok(cand);
                }
            }
            Err(GraphError::Infeasible(format!(
                "no strongly connected removal of {k} edges found after {} attempts",
                spec.retries.max(1)
            )))
        }
    }
}
