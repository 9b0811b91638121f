//! Random tiny instances shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use patrolswitch::graph::{Edge, Target};
use patrolswitch::strategy::AugLayout;
use patrolswitch::{PatrollingGraph, RegularStrategy};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    patrolswitch::rng::rng(seed, 0)
}

/// Strongly connected graph on 2..=`max_n` vertices: a random Hamiltonian
/// cycle plus each other ordered pair with probability `extra`.
pub fn tiny_graph(r: &mut ChaCha8Rng, max_n: usize, max_time: u32, max_d: u32, extra: f64) -> PatrollingGraph {
    let n = r.random_range(2..=max_n);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(r);
    let mut pairs = Vec::new();
    for i in 0..n {
        pairs.push((perm[i], perm[(i + 1) % n]));
    }
    for a in 0..n {
        for b in 0..n {
            if a != b && !pairs.contains(&(a, b)) && r.random_bool(extra) {
                pairs.push((a, b));
            }
        }
    }
    pairs.sort_unstable();
    let edges = pairs.into_iter().map(|(from, to)| Edge { from, to, time: r.random_range(1..=max_time) }).collect();
    let mut targets = Vec::new();
    for v in 0..n {
        if r.random_bool(0.6) {
            targets.push(Target { vertex: v, attack_time: r.random_range(1..=max_d), cost: r.random_range(1..=100) as f64 });
        }
    }
    if targets.is_empty() {
        targets.push(Target { vertex: r.random_range(0..n), attack_time: max_d, cost: 50.0 });
    }
    let names = (0..n).map(|i| format!("v{i}")).collect();
    PatrollingGraph::new(names, targets, edges).expect("valid tiny graph")
}

/// Random strategy keeping each slot of a row with probability `keep` (at
/// least one and at most `max_branch` per row).
pub fn sparse_strategy(r: &mut ChaCha8Rng, g: &PatrollingGraph, mem: usize, keep: f64, max_branch: usize) -> RegularStrategy {
    let layout = Arc::new(AugLayout::new(g, mem).unwrap());
    let mut probs = vec![0.0; layout.n_slots()];
    for a in 0..layout.n_aug() {
        let row: Vec<usize> = layout.row(a).collect();
        let mut chosen: Vec<usize> = row.iter().copied().filter(|_| r.random_bool(keep)).collect();
        chosen.shuffle(r);
        chosen.truncate(max_branch);
        if chosen.is_empty() {
            chosen.push(row[r.random_range(0..row.len())]);
        }
        let w: Vec<f64> = chosen.iter().map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (s, x) in chosen.iter().zip(&w) {
            probs[*s] = x / total;
        }
    }
    RegularStrategy::from_probs(layout, probs).unwrap()
}

/// Graph with the same vertices, edges and targets but new costs.
pub fn recost(r: &mut ChaCha8Rng, g: &PatrollingGraph) -> PatrollingGraph {
    let costs: Vec<f64> = g.targets().iter().map(|_| r.random_range(1..=100) as f64).collect();
    g.with_costs(&costs).unwrap()
}

/// Graph with the same vertices, edges and targets but new edge times.
pub fn retime(r: &mut ChaCha8Rng, g: &PatrollingGraph, max_time: u32) -> PatrollingGraph {
    let edges = g.edges().iter().map(|e| Edge { time: r.random_range(1..=max_time), ..*e }).collect();
    g.with_edges(edges).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// Soft loss of `softmax(logits)` in double-double arithmetic, with logit
/// `i` shifted by `shift`. Independent of the crate's evaluator.
pub fn loss_dd(g: &PatrollingGraph, layout: &AugLayout, logits: &[f64], i: usize, shift: f64, eps: f64, pwr: u32) -> twofloat::TwoFloat {
    use twofloat::TwoFloat as T;
    let zero = T::from(0.0);
    let one = T::from(1.0);
    let mut probs = vec![zero; logits.len()];
    for a in 0..layout.n_aug() {
        let row: Vec<usize> = layout.row(a).collect();
        let x: Vec<T> = row.iter().map(|&s| if s == i { T::from(logits[s]) + T::from(shift) } else { T::from(logits[s]) }).collect();
        let mx = x.iter().copied().fold(x[0], |m, v| if v > m { v } else { m });
        let e: Vec<T> = x.iter().map(|&v| (v - mx).exp()).collect();
        let z = e.iter().fold(zero, |acc, &v| acc + v);
        for (k, &s) in row.iter().enumerate() {
            probs[s] = e[k] / z;
        }
    }
    let time = layout.slot_times(g);
    let nav = layout.n_aug();
    let nt = g.targets().len();
    let mut steals = vec![zero; layout.n_slots() * nt];
    for (k, tg) in g.targets().iter().enumerate() {
        let d = tg.attack_time as usize;
        // miss[b][a]: probability of avoiding τ for `b` more time units
        let mut miss = vec![vec![one; nav]; d];
        for b in 0..d {
            for a in 0..nav {
                if layout.vertex_of(a) == tg.vertex {
                    miss[b][a] = zero;
                } else if b > 0 {
                    let mut acc = zero;
                    for r in layout.row(a) {
                        let t = time[r] as usize;
                        acc = acc + if t > b { probs[r] } else { probs[r] * miss[b - t][layout.slot_dst[r]] };
                    }
                    miss[b][a] = acc;
                }
            }
        }
        for s in 0..layout.n_slots() {
            let t = time[s] as usize;
            let m = if t > d { one } else { miss[d - t][layout.slot_dst[s]] };
            steals[s * nt + k] = T::from(tg.cost) * m;
        }
    }
    let m = steals.iter().copied().fold(steals[0], |m, v| if v > m { v } else { m });
    let eps = T::from(eps);
    let mut loss = zero;
    for &s in &steals {
        if s >= m - eps {
            let phi = one + (s - m) / eps;
            let mut p = one;
            for _ in 0..pwr {
                p = p * phi;
            }
            loss = loss + p;
        }
    }
    loss
}

/// Central difference of `loss_dd` in logit `i`.
pub fn fd_dd(g: &PatrollingGraph, layout: &AugLayout, logits: &[f64], i: usize, h: f64, eps: f64, pwr: u32) -> f64 {
    let up = loss_dd(g, layout, logits, i, h, eps, pwr);
    let down = loss_dd(g, layout, logits, i, -h, eps, pwr);
    f64::from((up - down) / twofloat::TwoFloat::from(2.0 * h))
}

/// Largest exact switch steal over every support slot of σ1, target, delay
/// and change offset in `1..=d(τ)`.
pub fn brute_max_switch_steal(
    ce: &patrolswitch::ChangingEnvironment,
    s1: &RegularStrategy,
    s2: &RegularStrategy,
) -> f64 {
    use patrolswitch::sim::{exact_switch_steal, AttackSpec};
    let time = s1.layout.slot_times(&ce.g1);
    let mut best = f64::NEG_INFINITY;
    for slot in s1.support() {
        for tg in ce.g1.targets() {
            for delta in 0..time[slot] {
                for delta_t in 1..=tg.attack_time {
                    let spec = AttackSpec { slot, target: tg.vertex, delta, delta_t };
                    best = best.max(exact_switch_steal(ce, s1, s2, spec).unwrap());
                }
            }
        }
    }
    best
}

/// A random changing environment on a tiny graph: costs, times or one edge
/// change, chosen by `kind % 3`.
pub fn tiny_change(r: &mut ChaCha8Rng, g1: &PatrollingGraph, kind: u64, max_time: u32) -> PatrollingGraph {
    use patrolswitch::generators::{apply_change, ChangeKind, ChangeSpec};
    match kind % 3 {
        0 => recost(r, g1),
        1 => retime(r, g1, max_time),
        _ => apply_change(g1, &ChangeSpec::new(ChangeKind::EdgeRemoval, 1.0, r.random()))
            .unwrap_or_else(|_| recost(r, g1)),
    }
}
