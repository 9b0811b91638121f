//! Miss probabilities, steals, attacker/defender values, the soft loss and
//! its reverse-mode gradient.
//!
//! For target τ the miss table holds `M[b][v̂]`, the probability that a walk
//! from `v̂` does not visit τ within budget `b`, for `b` in `0..d(τ)`.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PatrollingGraph;
use crate::scc;
use crate::strategy::{softmax_row, AugLayout, AugmentedVertex, ParamTable, RegularStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    AllSupport,
    BestInitial,
}

impl FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all_support" => Ok(EvalMode::AllSupport),
            "best_initial" => Ok(EvalMode::BestInitial),
            _ => Err(format!("unknown mode {s:?} (expected all_support or best_initial)")),
        }
    }
}

/// Steals of a set of slots against every target, slot-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StealTable {
    pub slots: Vec<usize>,
    pub n_targets: usize,
    pub values: Vec<f64>,
}

impl StealTable {
    pub fn get(&self, i: usize, target: usize) -> f64 {
        self.values[i * self.n_targets + target]
    }

    /// `(slot, target, steal)` in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.slots[i / self.n_targets], i % self.n_targets, v))
    }

    /// First maximal entry as `(slot, target, steal)`.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (s, k, v) in self.iter() {
            if best.is_none_or(|b| v > b.2) {
                best = Some((s, k, v));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mode: EvalMode,
    pub steals: StealTable,
    pub aval: f64,
    pub dval: f64,
    /// `α_max` minus the worst steal reachable from each augmented vertex.
    pub per_vertex: Vec<f64>,
    pub active_slots: Vec<usize>,
    /// First maximal `(slot, target)` over the active set.
    pub argmax: Option<(usize, usize)>,
}

/// Forward pass: miss tables per target and the dense steal vector.
#[derive(Debug, Clone)]
pub struct Forward {
    pub tables: Vec<Vec<f64>>,
    /// `steal[slot * n_targets + k]` for every slot.
    pub steal: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct TargetInfo {
    vertex: usize,
    d: usize,
    alpha: f64,
}

/// Evaluation context for one graph and augmented layout.
#[derive(Debug, Clone)]
pub struct Evaluator {
    layout: Arc<AugLayout>,
    slot_time: Vec<u32>,
    targets: Vec<TargetInfo>,
    alpha_max: f64,
}

impl Evaluator {
    /// Checks that `layout` fits `g` and that every target is reachable.
    pub fn new(g: &PatrollingGraph, layout: Arc<AugLayout>) -> Result<Self> {
        if !layout.matches(g) {
            return Err(Error::TopologyMismatch);
        }
        g.require_reachable_targets()?;
        Ok(Self::new_unchecked(g, layout))
    }

    pub(crate) fn new_unchecked(g: &PatrollingGraph, layout: Arc<AugLayout>) -> Self {
        let targets = g
            .targets()
            .iter()
            .map(|t| TargetInfo { vertex: t.vertex, d: t.attack_time as usize, alpha: t.cost })
            .collect();
        Self { slot_time: layout.slot_times(g), layout, targets, alpha_max: g.alpha_max() }
    }

    pub fn layout(&self) -> &Arc<AugLayout> {
        &self.layout
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    /// Miss table `M[b * n_aug + v̂]` for `b` in `0..=horizon`.
    pub fn miss_table(&self, probs: &[f64], target_vertex: usize, horizon: usize) -> Vec<f64> {
        let l = &*self.layout;
        let nav = l.n_aug();
        let mem = l.mem;
        let mut m = vec![0.0; (horizon + 1) * nav];
        for a in 0..nav {
            m[a] = if a / mem == target_vertex { 0.0 } else { 1.0 };
        }
        for b in 1..=horizon {
            let (done, rest) = m.split_at_mut(b * nav);
            let cur = &mut rest[..nav];
            for (a, out) in cur.iter_mut().enumerate() {
                if a / mem == target_vertex {
                    *out = 0.0;
                    continue;
                }
                let mut acc = 0.0;
                for s in l.row(a) {
                    let p = probs[s];
                    if p == 0.0 {
                        continue;
                    }
                    let t = self.slot_time[s] as usize;
                    acc += if t > b { p } else { p * done[(b - t) * nav + l.slot_dst[s]] };
                }
                *out = acc;
            }
        }
        m
    }

    pub fn forward(&self, probs: &[f64]) -> Forward {
        let nt = self.targets.len();
        let tables: Vec<Vec<f64>> = self
            .targets
            .par_iter()
            .map(|t| self.miss_table(probs, t.vertex, t.d.saturating_sub(1)))
            .collect();
        let l = &*self.layout;
        let nav = l.n_aug();
        let mut steal = vec![0.0; l.n_slots() * nt];
        for s in 0..l.n_slots() {
            let t = self.slot_time[s] as usize;
            let dst = l.slot_dst[s];
            for (k, tg) in self.targets.iter().enumerate() {
                let miss = if t > tg.d { 1.0 } else { tables[k][(tg.d - t) * nav + dst] };
                steal[s * nt + k] = tg.alpha * miss;
            }
        }
        Forward { tables, steal }
    }

    /// Evaluates a strategy whose layout is this evaluator's.
    pub fn evaluate(&self, probs: &[f64], mode: EvalMode) -> EvalResult {
        let fw = self.forward(probs);
        self.evaluate_forward(probs, &fw, mode)
    }

    pub fn evaluate_forward(&self, probs: &[f64], fw: &Forward, mode: EvalMode) -> EvalResult {
        let l = &*self.layout;
        let nt = self.targets.len();
        let nav = l.n_aug();
        let support: Vec<usize> = (0..l.n_slots()).filter(|&s| probs[s] > 0.0).collect();
        let edge_max = |s: usize| fw.steal[s * nt..(s + 1) * nt].iter().copied().fold(f64::NEG_INFINITY, f64::max);

        // worst reachable steal per augmented vertex over the condensation
        let mut adj = vec![Vec::new(); nav];
        for &s in &support {
            adj[l.slot_src[s]].push(l.slot_dst[s]);
        }
        let comps = scc::tarjan(&adj);
        let mut reach = vec![f64::NEG_INFINITY; comps.count];
        let mut by_comp = vec![Vec::new(); comps.count];
        for &s in &support {
            by_comp[comps.comp[l.slot_src[s]]].push(s);
        }
        for c in 0..comps.count {
            let mut r = f64::NEG_INFINITY;
            for &s in &by_comp[c] {
                r = r.max(edge_max(s));
                let cd = comps.comp[l.slot_dst[s]];
                if cd != c {
                    r = r.max(reach[cd]);
                }
            }
            reach[c] = r;
        }
        let worst: Vec<f64> = (0..nav).map(|a| reach[comps.comp[a]]).collect();
        let per_vertex: Vec<f64> = worst.iter().map(|&w| self.alpha_max - w).collect();

        let active_slots = match mode {
            EvalMode::AllSupport => support,
            EvalMode::BestInitial => {
                let mut best = 0;
                for a in 1..nav {
                    if worst[a] < worst[best] {
                        best = a;
                    }
                }
                let strat = RegularStrategy { layout: self.layout.clone(), probs: probs.to_vec() };
                crate::strategy::support_reachable(&strat, &[best]).1.into_iter().collect()
            }
        };
        let mut values = Vec::with_capacity(active_slots.len() * nt);
        for &s in &active_slots {
            values.extend_from_slice(&fw.steal[s * nt..(s + 1) * nt]);
        }
        let steals = StealTable { slots: active_slots.clone(), n_targets: nt, values };
        let am = steals.argmax();
        let aval = am.map_or(0.0, |x| x.2);
        EvalResult {
            mode,
            steals,
            aval,
            dval: self.alpha_max - aval,
            per_vertex,
            active_slots,
            argmax: am.map(|x| (x.0, x.1)),
        }
    }

    /// Soft loss over every slot and target, and its gradient with respect
    /// to the logits. Descending this gradient pushes the maximal steals
    /// down.
    pub fn loss_and_grad(&self, logits: &[f64], eps: f64, pwr: u32) -> (f64, Vec<f64>) {
        self.loss_and_grad_opt(logits, eps, pwr, true)
    }

    /// `loss_and_grad`, optionally holding the maximum constant.
    pub fn loss_and_grad_opt(&self, logits: &[f64], eps: f64, pwr: u32, through_max: bool) -> (f64, Vec<f64>) {
        let probs = self.softmax(logits);
        let fw = self.forward(&probs);
        let (loss, adj_steal) = loss_adjoint_opt(&fw.steal, eps, pwr, through_max);
        let adj_p = self.backward(&probs, &fw, &adj_steal);
        (loss, self.softmax_backward(&probs, &adj_p))
    }

    pub fn softmax(&self, logits: &[f64]) -> Vec<f64> {
        let l = &*self.layout;
        let mut probs = vec![0.0; l.n_slots()];
        for a in 0..l.n_aug() {
            let r = l.row(a);
            softmax_row(&logits[r.clone()], &mut probs[r]);
        }
        probs
    }

    /// Adjoint of the forward pass: maps steal adjoints to probability
    /// adjoints.
    pub fn backward(&self, probs: &[f64], fw: &Forward, adj_steal: &[f64]) -> Vec<f64> {
        let l = &*self.layout;
        let nt = self.targets.len();
        let per_target: Vec<Vec<f64>> = (0..nt)
            .into_par_iter()
            .map(|k| self.backward_target(probs, &fw.tables[k], k, adj_steal))
            .collect();
        let mut adj_p = vec![0.0; l.n_slots()];
        for part in &per_target {
            for (a, b) in adj_p.iter_mut().zip(part) {
                *a += b;
            }
        }
        adj_p
    }

    fn backward_target(&self, probs: &[f64], m: &[f64], k: usize, adj_steal: &[f64]) -> Vec<f64> {
        let l = &*self.layout;
        let nav = l.n_aug();
        let nt = self.targets.len();
        let tg = self.targets[k];
        let horizon = tg.d.saturating_sub(1);
        let mut adj_m = vec![0.0; (horizon + 1) * nav];
        let mut adj_p = vec![0.0; l.n_slots()];
        for s in 0..l.n_slots() {
            let w = adj_steal[s * nt + k];
            let t = self.slot_time[s] as usize;
            if w != 0.0 && t <= tg.d {
                adj_m[(tg.d - t) * nav + l.slot_dst[s]] += tg.alpha * w;
            }
        }
        for b in (1..=horizon).rev() {
            for a in 0..nav {
                let am = adj_m[b * nav + a];
                if am == 0.0 || a / l.mem == tg.vertex {
                    continue;
                }
                for s in l.row(a) {
                    let t = self.slot_time[s] as usize;
                    if t > b {
                        adj_p[s] += am;
                    } else {
                        let i = (b - t) * nav + l.slot_dst[s];
                        adj_p[s] += am * m[i];
                        adj_m[i] += am * probs[s];
                    }
                }
            }
        }
        adj_p
    }

    /// Row-wise softmax Jacobian transpose.
    pub fn softmax_backward(&self, probs: &[f64], adj_p: &[f64]) -> Vec<f64> {
        let l = &*self.layout;
        let mut g = vec![0.0; l.n_slots()];
        for a in 0..l.n_aug() {
            let r = l.row(a);
            let mean: f64 = r.clone().map(|s| probs[s] * adj_p[s]).sum();
            for s in r {
                g[s] = probs[s] * (adj_p[s] - mean);
            }
        }
        g
    }
}

/// Σ φ_ε(s)^pwr over `steal` with `m` the first maximum, plus its adjoint.
pub fn loss_adjoint(steal: &[f64], eps: f64, pwr: u32) -> (f64, Vec<f64>) {
    loss_adjoint_opt(steal, eps, pwr, true)
}

/// As `loss_adjoint`; with `through_max = false` the maximum `m` is held
/// constant, so every steal in the window only receives a positive adjoint.
pub fn loss_adjoint_opt(steal: &[f64], eps: f64, pwr: u32, through_max: bool) -> (f64, Vec<f64>) {
    let mut adj = vec![0.0; steal.len()];
    if steal.is_empty() {
        return (0.0, adj);
    }
    let mut arg = 0;
    for (i, &s) in steal.iter().enumerate() {
        if s > steal[arg] {
            arg = i;
        }
    }
    let m = steal[arg];
    let mut loss = 0.0;
    let mut adj_m = 0.0;
    for (i, &s) in steal.iter().enumerate() {
        if s < m - eps {
            continue;
        }
        let phi = 1.0 + (s - m) / eps;
        loss += phi.powi(pwr as i32);
        let w = pwr as f64 * phi.powi(pwr as i32 - 1) / eps;
        adj[i] += w;
        adj_m -= w;
    }
    if through_max {
        adj[arg] += adj_m;
    }
    (loss, adj)
}

// ---------------------------------------------------------------------------
// public entry points

fn checked(s: &RegularStrategy, g: &PatrollingGraph) -> Result<Evaluator> {
    Evaluator::new(g, s.layout.clone())
}

/// Probability that a walk from `v` misses `target_vertex` within `budget`.
pub fn miss_prob(s: &RegularStrategy, g: &PatrollingGraph, v: AugmentedVertex, target_vertex: usize, budget: i64) -> Result<f64> {
    if g.target_index(target_vertex).is_none() {
        return Err(Error::NotATarget(g.name(target_vertex).to_string()));
    }
    if !s.layout.matches(g) {
        return Err(Error::TopologyMismatch);
    }
    if budget < 0 {
        return Ok(1.0);
    }
    let ev = Evaluator::new_unchecked(g, s.layout.clone());
    let b = budget as usize;
    let table = ev.miss_table(&s.probs, target_vertex, b);
    Ok(table[b * s.layout.n_aug() + s.layout.avx(v.vertex, v.mem)])
}

pub fn evaluate(s: &RegularStrategy, g: &PatrollingGraph, mode: EvalMode) -> Result<EvalResult> {
    Ok(checked(s, g)?.evaluate(&s.probs, mode))
}

/// Soft loss of a steal table.
pub fn loss(steals: &StealTable, eps: f64, pwr: u32) -> Result<f64> {
    if steals.values.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !(eps > 0.0) || pwr < 1 {
        return Err(Error::Config("loss needs eps > 0 and pwr ≥ 1".into()));
    }
    Ok(loss_adjoint(&steals.values, eps, pwr).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Gradient of the soft loss of `softmax(p)` with respect to the logits.
pub fn grad(p: &ParamTable, g: &PatrollingGraph, eps: f64, pwr: u32) -> Result<GradResult> {
    if !(eps > 0.0) || pwr < 1 {
        return Err(Error::Config("loss needs eps > 0 and pwr ≥ 1".into()));
    }
    let ev = Evaluator::new(g, p.layout.clone())?;
    let (loss, grad) = ev.loss_and_grad(&p.logits, eps, pwr);
    Ok(GradResult { loss, grad })
}

/// Loss of `softmax(p)` without the gradient.
pub fn soft_loss(p: &ParamTable, g: &PatrollingGraph, eps: f64, pwr: u32) -> Result<f64> {
    let ev = Evaluator::new(g, p.layout.clone())?;
    let fw = ev.forward(&ev.softmax(&p.logits));
    Ok(loss_adjoint(&fw.steal, eps, pwr).0)
}

// ---------------------------------------------------------------------------
// export

pub fn steals_csv(r: &EvalResult, s: &RegularStrategy, g: &PatrollingGraph) -> String {
    let l = &s.layout;
    let mut out = String::from("src_vertex,src_mem,dst_vertex,dst_mem,target,steal\n");
    for (slot, k, v) in r.steals.iter() {
        let a = l.aug(l.slot_src[slot]);
        let b = l.aug(l.slot_dst[slot]);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            g.name(a.vertex),
            a.mem,
            g.name(b.vertex),
            b.mem,
            g.name(g.targets()[k].vertex),
            crate::strategy::fmt_f64(v)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: EvalMode,
    pub aval: f64,
    pub dval: f64,
    /// `[[src_vertex, src_mem], [dst_vertex, dst_mem]]`
    pub argmax_edge: Option<[(String, usize); 2]>,
    pub argmax_target: Option<String>,
}

pub fn summary(r: &EvalResult, s: &RegularStrategy, g: &PatrollingGraph) -> EvalSummary {
    let l = &s.layout;
    let named = |a: usize| {
        let x = l.aug(a);
        (g.name(x.vertex).to_string(), x.mem)
    };
    EvalSummary {
        mode: r.mode,
        aval: r.aval,
        dval: r.dval,
        argmax_edge: r.argmax.map(|(slot, _)| [named(l.slot_src[slot]), named(l.slot_dst[slot])]),
        argmax_target: r.argmax.map(|(_, k)| g.name(g.targets()[k].vertex).to_string()),
    }
}
