//! Regular (finite-memory) Defender strategies over augmented vertices.
//!
//! An augmented vertex `(v, m)` has index `v * mem + m`. Its outgoing
//! augmented edges ("slots") are laid out row by row: for each graph edge
//! leaving `v` in declaration order, one slot per successor memory `m'`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PatrollingGraph;
use crate::rng;

/// Floor added before taking logarithms of probabilities.
pub const LOGIT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AugmentedVertex {
    pub vertex: usize,
    pub mem: usize,
}

/// Slot layout of all augmented edges for a graph topology and memory size.
#[derive(Debug, Clone, PartialEq)]
pub struct AugLayout {
    pub n_vertices: usize,
    pub mem: usize,
    /// `(from, to)` of every graph edge, for topology checks.
    pub topology: Vec<(usize, usize)>,
    row_start: Vec<usize>,
    pub slot_src: Vec<usize>,
    pub slot_dst: Vec<usize>,
    pub slot_edge: Vec<usize>,
    in_start: Vec<usize>,
    in_slots: Vec<usize>,
}

impl AugLayout {
    pub fn new(g: &PatrollingGraph, mem: usize) -> Result<Self> {
        if mem < 1 {
            return Err(Error::Config("mem_size must be ≥ 1".into()));
        }
        let nv = g.n_vertices();
        let nav = nv * mem;
        let mut row_start = Vec::with_capacity(nav + 1);
        let (mut src, mut dst, mut edge) = (Vec::new(), Vec::new(), Vec::new());
        for v in 0..nv {
            for m in 0..mem {
                row_start.push(dst.len());
                let a = v * mem + m;
                for &e in g.out_edges(v) {
                    let u = g.edges()[e].to;
                    for m2 in 0..mem {
                        src.push(a);
                        dst.push(u * mem + m2);
                        edge.push(e);
                    }
                }
            }
        }
        row_start.push(dst.len());
        let mut counts = vec![0usize; nav + 1];
        for &d in &dst {
            counts[d + 1] += 1;
        }
        for i in 0..nav {
            counts[i + 1] += counts[i];
        }
        let in_start = counts.clone();
        let mut fill = counts;
        let mut in_slots = vec![0; dst.len()];
        for (s, &d) in dst.iter().enumerate() {
            in_slots[fill[d]] = s;
            fill[d] += 1;
        }
        Ok(Self {
            n_vertices: nv,
            mem,
            topology: g.edges().iter().map(|e| (e.from, e.to)).collect(),
            row_start,
            slot_src: src,
            slot_dst: dst,
            slot_edge: edge,
            in_start,
            in_slots,
        })
    }

    pub fn n_aug(&self) -> usize {
        self.n_vertices * self.mem
    }

    pub fn n_slots(&self) -> usize {
        self.slot_dst.len()
    }

    pub fn avx(&self, v: usize, m: usize) -> usize {
        v * self.mem + m
    }

    pub fn aug(&self, a: usize) -> AugmentedVertex {
        AugmentedVertex { vertex: a / self.mem, mem: a % self.mem }
    }

    pub fn vertex_of(&self, a: usize) -> usize {
        a / self.mem
    }

    /// Slot range of the row of augmented vertex `a`.
    pub fn row(&self, a: usize) -> std::ops::Range<usize> {
        self.row_start[a]..self.row_start[a + 1]
    }

    /// Slots entering augmented vertex `a`, ascending.
    pub fn in_slots(&self, a: usize) -> &[usize] {
        &self.in_slots[self.in_start[a]..self.in_start[a + 1]]
    }

    /// Slot of `((v, m), (u, m'))` if the graph edge exists.
    pub fn slot(&self, g: &PatrollingGraph, from: AugmentedVertex, to: AugmentedVertex) -> Option<usize> {
        let e = g.edge_id(from.vertex, to.vertex)?;
        let a = self.avx(from.vertex, from.mem);
        self.row(a).find(|&s| self.slot_edge[s] == e && self.slot_dst[s] == self.avx(to.vertex, to.mem))
    }

    pub fn matches(&self, g: &PatrollingGraph) -> bool {
        self.n_vertices == g.n_vertices()
            && self.topology.len() == g.edges().len()
            && self.topology.iter().zip(g.edges()).all(|(&(a, b), e)| a == e.from && b == e.to)
    }

    /// Travel time of every slot under the edge times of `g`.
    pub fn slot_times(&self, g: &PatrollingGraph) -> Vec<u32> {
        self.slot_edge.iter().map(|&e| g.edges()[e].time).collect()
    }

    fn check_rows(&self, g: &PatrollingGraph) -> Result<()> {
        for a in 0..self.n_aug() {
            if self.row(a).is_empty() {
                let av = self.aug(a);
                return Err(Error::DeadEnd { vertex: g.name(av.vertex).to_string(), mem: av.mem });
            }
        }
        Ok(())
    }
}

/// Unconstrained logits, one per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable {
    pub layout: Arc<AugLayout>,
    pub logits: Vec<f64>,
}

impl ParamTable {
    pub fn zeros(g: &PatrollingGraph, mem: usize) -> Result<Self> {
        let layout = AugLayout::new(g, mem)?;
        let n = layout.n_slots();
        Ok(Self { layout: Arc::new(layout), logits: vec![0.0; n] })
    }

    pub fn mem_size(&self) -> usize {
        self.layout.mem
    }
}

/// Row-stochastic transition probabilities, one per slot.
#[derive(Debug, Clone)]
pub struct RegularStrategy {
    pub layout: Arc<AugLayout>,
    pub probs: Vec<f64>,
}

impl PartialEq for RegularStrategy {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout) && self.probs == other.probs
    }
}

impl RegularStrategy {
    pub fn mem_size(&self) -> usize {
        self.layout.mem
    }

    /// Builds a strategy from per-slot probabilities, checking row sums.
    pub fn from_probs(layout: Arc<AugLayout>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != layout.n_slots() {
            return Err(Error::Strategy(format!("expected {} probabilities, got {}", layout.n_slots(), probs.len())));
        }
        for a in 0..layout.n_aug() {
            let r = layout.row(a);
            if r.is_empty() {
                continue;
            }
            if probs[r.clone()].iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Strategy("probabilities must be finite and non-negative".into()));
            }
            let s: f64 = probs[r].iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                let av = layout.aug(a);
                return Err(Error::Strategy(format!("row ({}, {}) sums to {s}", av.vertex, av.mem)));
            }
        }
        Ok(Self { layout, probs })
    }

    /// Deterministic strategy given by a successor function on augmented vertices.
    pub fn deterministic(g: &PatrollingGraph, mem: usize, next: impl Fn(AugmentedVertex) -> AugmentedVertex) -> Result<Self> {
        let layout = Arc::new(AugLayout::new(g, mem)?);
        let mut probs = vec![0.0; layout.n_slots()];
        for a in 0..layout.n_aug() {
            let from = layout.aug(a);
            let to = next(from);
            let s = layout
                .slot(g, from, to)
                .ok_or_else(|| Error::Strategy(format!("no edge {} -> {}", g.name(from.vertex), g.name(to.vertex))))?;
            probs[s] = 1.0;
        }
        Ok(Self { layout, probs })
    }

    pub fn uniform(g: &PatrollingGraph, mem: usize) -> Result<Self> {
        softmax_strategy(&ParamTable::zeros(g, mem)?)
    }

    pub fn prob(&self, g: &PatrollingGraph, from: AugmentedVertex, to: AugmentedVertex) -> f64 {
        self.layout.slot(g, from, to).map_or(0.0, |s| self.probs[s])
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&s| self.probs[s] > 0.0).collect()
    }

    /// Same probabilities viewed over another graph with identical topology.
    pub fn on_graph(&self, g: &PatrollingGraph) -> Result<Self> {
        if !self.layout.matches(g) {
            return Err(Error::TopologyMismatch);
        }
        Ok(self.clone())
    }
}

pub fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - mx).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

pub fn softmax_strategy(p: &ParamTable) -> Result<RegularStrategy> {
    let l = &p.layout;
    let mut probs = vec![0.0; l.n_slots()];
    for a in 0..l.n_aug() {
        let r = l.row(a);
        if r.is_empty() {
            return Err(Error::DeadEnd { vertex: format!("#{}", l.vertex_of(a)), mem: a % l.mem });
        }
        if p.logits[r.clone()].iter().any(|x| !x.is_finite()) {
            return Err(Error::Strategy("logits must be finite".into()));
        }
        softmax_row(&p.logits[r.clone()], &mut probs[r]);
    }
    Ok(RegularStrategy { layout: p.layout.clone(), probs })
}

/// Zeroes entries below `theta` and renormalizes each row. A row that would
/// vanish keeps its largest entry (first on ties) at 1.
pub fn threshold(s: &RegularStrategy, theta: f64) -> RegularStrategy {
    if theta <= 0.0 {
        return s.clone();
    }
    let l = &s.layout;
    let mut probs = s.probs.clone();
    for a in 0..l.n_aug() {
        let r = l.row(a);
        if r.is_empty() {
            continue;
        }
        let row = &mut probs[r];
        if row.iter().all(|&p| p == 0.0 || p >= theta) {
            continue;
        }
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        for p in row.iter_mut() {
            if *p < theta {
                *p = 0.0;
            }
        }
        let z: f64 = row.iter().sum();
        if z > 0.0 {
            for p in row.iter_mut() {
                *p /= z;
            }
        } else {
            row[best] = 1.0;
        }
    }
    RegularStrategy { layout: s.layout.clone(), probs }
}

pub fn random_init(g: &PatrollingGraph, mem: usize, seed: u64) -> Result<ParamTable> {
    let layout = AugLayout::new(g, mem)?;
    layout.check_rows(g)?;
    let mut r = rng::rng(seed, rng::STREAM_INIT);
    let mut logits = vec![0.0; layout.n_slots()];
    for a in 0..layout.n_aug() {
        let row = &mut logits[layout.row(a)];
        for x in row.iter_mut() {
            *x = r.random::<f64>();
        }
        let z: f64 = row.iter().sum();
        let n = row.len() as f64;
        for x in row.iter_mut() {
            let q = if z > 0.0 { *x / z } else { 1.0 / n };
            *x = (q + LOGIT_FLOOR).ln();
        }
    }
    Ok(ParamTable { layout: Arc::new(layout), logits })
}

/// Forward closure from `initial` along slots with positive probability.
/// Returns (augmented vertex indices, slot indices).
pub fn support_reachable(s: &RegularStrategy, initial: &[usize]) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let l = &s.layout;
    let mut seen = vec![false; l.n_aug()];
    let mut stack = Vec::new();
    for &a in initial {
        if !seen[a] {
            seen[a] = true;
            stack.push(a);
        }
    }
    let mut slots = BTreeSet::new();
    while let Some(a) = stack.pop() {
        for sl in l.row(a) {
            if s.probs[sl] > 0.0 {
                slots.insert(sl);
                let b = l.slot_dst[sl];
                if !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    let verts = (0..l.n_aug()).filter(|&a| seen[a]).collect();
    (verts, slots)
}

/// Carries `sigma1` over to `g2`: mass on removed edges is dropped and rows
/// renormalized; rows with no surviving mass become uniform.
pub fn adapt_to(sigma1: &RegularStrategy, g1: &PatrollingGraph, g2: &PatrollingGraph) -> Result<ParamTable> {
    let l1 = &sigma1.layout;
    if !l1.matches(g1) {
        return Err(Error::TopologyMismatch);
    }
    if g1.n_vertices() != g2.n_vertices() {
        return Err(Error::Strategy("graphs must share vertices".into()));
    }
    let mem = l1.mem;
    let l2 = AugLayout::new(g2, mem)?;
    l2.check_rows(g2)?;
    let mut logits = vec![0.0; l2.n_slots()];
    for a in 0..l2.n_aug() {
        let r = l2.row(a);
        let from = l2.aug(a);
        let mut q: Vec<f64> = r.clone().map(|s| sigma1.prob(g1, from, l2.aug(l2.slot_dst[s]))).collect();
        let z: f64 = q.iter().sum();
        let n = q.len() as f64;
        for x in q.iter_mut() {
            *x = if z > 0.0 { *x / z } else { 1.0 / n };
        }
        for (s, x) in r.zip(q) {
            logits[s] = (x + LOGIT_FLOOR).ln();
        }
    }
    Ok(ParamTable { layout: Arc::new(l2), logits })
}

/// Executes `sigma1` unchanged in `g2`; every support edge must survive.
pub fn transfer(sigma1: &RegularStrategy, g1: &PatrollingGraph, g2: &PatrollingGraph) -> Result<RegularStrategy> {
    let l1 = &sigma1.layout;
    if !l1.matches(g1) {
        return Err(Error::TopologyMismatch);
    }
    let l2 = Arc::new(AugLayout::new(g2, l1.mem)?);
    let mut probs = vec![0.0; l2.n_slots()];
    for s in sigma1.support() {
        let from = l1.aug(l1.slot_src[s]);
        let to = l1.aug(l1.slot_dst[s]);
        let t = l2.slot(g2, from, to).ok_or_else(|| Error::NotExecutable {
            from: g1.name(from.vertex).to_string(),
            to: g1.name(to.vertex).to_string(),
        })?;
        probs[t] = sigma1.probs[s];
    }
    Ok(RegularStrategy { layout: l2, probs })
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowFile {
    from: (String, usize),
    to: Vec<(String, usize, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyFile {
    mem_size: usize,
    rows: Vec<RowFile>,
}

/// Shortest decimal form that parses back to the same double.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{x:?}");
    if s.contains('e') || s.contains('E') || s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Strategy JSON. Only positive entries are listed.
pub fn save_strategy(s: &RegularStrategy, g: &PatrollingGraph) -> Vec<u8> {
    let l = &s.layout;
    let mut out = String::new();
    let _ = writeln!(out, "{{\"mem_size\":{},\"rows\":[", l.mem);
    let mut first_row = true;
    for a in 0..l.n_aug() {
        let from = l.aug(a);
        if !first_row {
            out.push_str(",\n");
        }
        first_row = false;
        let _ = write!(out, "{{\"from\":[{},{}],\"to\":[", json_str(g.name(from.vertex)), from.mem);
        let mut first = true;
        for sl in l.row(a) {
            let p = s.probs[sl];
            if p <= 0.0 {
                continue;
            }
            if !first {
                out.push(',');
            }
            first = false;
            let to = l.aug(l.slot_dst[sl]);
            let _ = write!(out, "[{},{},{}]", json_str(g.name(to.vertex)), to.mem, fmt_f64(p));
        }
        out.push_str("]}");
    }
    out.push_str("\n]}\n");
    out.into_bytes()
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

pub fn load_strategy(bytes: &[u8], g: &PatrollingGraph) -> Result<RegularStrategy> {
    let f: StrategyFile = serde_json::from_slice(bytes).map_err(|e| Error::Strategy(format!("schema violation: {e}")))?;
    let layout = Arc::new(AugLayout::new(g, f.mem_size)?);
    let mut probs = vec![0.0; layout.n_slots()];
    let mut seen = vec![false; layout.n_aug()];
    let vid = |name: &str| g.vertex(name).ok_or_else(|| Error::Strategy(format!("rows: unknown vertex {name:?}")));
    for row in &f.rows {
        let from = AugmentedVertex { vertex: vid(&row.from.0)?, mem: row.from.1 };
        if from.mem >= f.mem_size {
            return Err(Error::Strategy(format!("rows.from: memory {} out of range", from.mem)));
        }
        let a = layout.avx(from.vertex, from.mem);
        if std::mem::replace(&mut seen[a], true) {
            return Err(Error::Strategy(format!("rows.from: duplicate row ({}, {})", row.from.0, from.mem)));
        }
        for (u, m2, p) in &row.to {
            let to = AugmentedVertex { vertex: vid(u)?, mem: *m2 };
            if *m2 >= f.mem_size {
                return Err(Error::Strategy(format!("rows.to: memory {m2} out of range")));
            }
            let s = layout
                .slot(g, from, to)
                .ok_or_else(|| Error::Strategy(format!("rows.to: no edge {} -> {u}", row.from.0)))?;
            probs[s] = *p;
        }
    }
    for a in 0..layout.n_aug() {
        if !seen[a] && !layout.row(a).is_empty() {
            let av = layout.aug(a);
            return Err(Error::Strategy(format!("rows: missing row ({}, {})", g.name(av.vertex), av.mem)));
        }
    }
    RegularStrategy::from_probs(layout, probs)
}
