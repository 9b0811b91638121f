//! Patrolling graphs: vertices, timed directed edges, targets with attack
//! times and costs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, GraphError, Result};
use crate::scc;

/// A directed edge with an integer travel time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub time: u32,
}

/// A target vertex with its attack time `d` and cost `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub vertex: usize,
    pub attack_time: u32,
    pub cost: f64,
}

/// An immutable, validated patrolling graph.
///
/// Vertices, targets and edges keep their declaration order; every iteration
/// order in the crate derives from it.
#[derive(Debug, Clone)]
pub struct PatrollingGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    targets: Vec<Target>,
    target_of: Vec<Option<usize>>,
    edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
    lookup: HashMap<(usize, usize), usize>,
}

impl PartialEq for PatrollingGraph {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.targets == other.targets && self.edges == other.edges
    }
}

impl PatrollingGraph {
    /// Builds a graph, enforcing the structural invariants.
    pub fn new(names: Vec<String>, targets: Vec<Target>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(GraphError::invariant("vertices", format!("duplicate vertex id {n:?}")));
            }
        }
        let nv = names.len();
        if targets.is_empty() {
            return Err(GraphError::invariant("targets", "at least one target is required"));
        }
        let mut target_of = vec![None; nv];
        for (k, t) in targets.iter().enumerate() {
            if t.vertex >= nv {
                return Err(GraphError::invariant("targets.id", "target is not a vertex"));
            }
            if target_of[t.vertex].replace(k).is_some() {
                return Err(GraphError::invariant(
                    "targets.id",
                    format!("duplicate target {:?}", names[t.vertex]),
                ));
            }
            if t.attack_time < 1 {
                return Err(GraphError::invariant("targets.d", "attack time d must be ≥ 1"));
            }
            if !(t.cost.is_finite() && t.cost > 0.0) {
                return Err(GraphError::invariant("targets.alpha", "cost alpha must be > 0 and finite"));
            }
        }
        let mut out = vec![Vec::new(); nv];
        let mut lookup = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if e.from >= nv || e.to >= nv {
                return Err(GraphError::invariant("edges", "edge endpoint is not a vertex"));
            }
            if e.time < 1 {
                return Err(GraphError::invariant("edges.time", "travel_time must be ≥ 1"));
            }
            if lookup.insert((e.from, e.to), i).is_some() {
                return Err(GraphError::invariant(
                    "edges",
                    format!("duplicate edge {:?} -> {:?}", names[e.from], names[e.to]),
                ));
            }
            out[e.from].push(i);
        }
        Ok(Self {
            names,
            index,
            targets,
            target_of,
            edges,
            out,
            lookup,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn vertex(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    /// Index into `targets()` of the target located at vertex `v`.
    pub fn target_index(&self, v: usize) -> Option<usize> {
        self.target_of[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids leaving `v`, in declaration order.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn edge_id(&self, from: usize, to: usize) -> Option<usize> {
        self.lookup.get(&(from, to)).copied()
    }

    pub fn alpha_max(&self) -> f64 {
        self.targets.iter().map(|t| t.cost).fold(f64::MIN, f64::max)
    }

    pub fn d_max(&self) -> u32 {
        self.targets.iter().map(|t| t.attack_time).max().unwrap_or(0)
    }

    pub fn max_time(&self) -> u32 {
        self.edges.iter().map(|e| e.time).max().unwrap_or(0)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.out
            .iter()
            .map(|es| es.iter().map(|&e| self.edges[e].to).collect())
            .collect()
    }

    pub fn is_strongly_connected(&self) -> bool {
        scc::strongly_connected(&self.adjacency())
    }

    /// Targets that some vertex cannot reach by a walk of positive length.
    pub fn unreachable_targets(&self) -> Vec<usize> {
        let nv = self.n_vertices();
        let mut rev = vec![Vec::new(); nv];
        for e in &self.edges {
            rev[e.to].push(e.from);
        }
        let mut bad = Vec::new();
        for (k, t) in self.targets.iter().enumerate() {
            // vertices reaching τ in ≥ 1 step = vertices reaching a predecessor of τ
            let mut seen = vec![false; nv];
            let mut stack: Vec<usize> = Vec::new();
            for &p in &rev[t.vertex] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
            while let Some(u) = stack.pop() {
                for &p in &rev[u] {
                    if !seen[p] {
                        seen[p] = true;
                        stack.push(p);
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                bad.push(k);
            }
        }
        bad
    }

    /// Fails with the first target not reachable from every vertex.
    pub fn require_reachable_targets(&self) -> Result<()> {
        match self.unreachable_targets().first() {
            Some(&k) => Err(Error::UnreachableTarget(self.names[self.targets[k].vertex].clone())),
            None => Ok(()),
        }
    }

    /// Same graph with new target costs (in target order).
    pub fn with_costs(&self, costs: &[f64]) -> Result<Self, GraphError> {
        let targets = self
            .targets
            .iter()
            .zip(costs)
            .map(|(t, &c)| Target { cost: c, ..*t })
            .collect();
        Self::new(self.names.clone(), targets, self.edges.clone())
    }

    /// Same vertices and targets with a new edge list.
    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self, GraphError> {
        Self::new(self.names.clone(), self.targets.clone(), edges)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            vertices: self.names.clone(),
            targets: self
                .targets
                .iter()
                .map(|t| TargetSpec {
                    id: self.names[t.vertex].clone(),
                    d: t.attack_time as i64,
                    alpha: t.cost,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    from: self.names[e.from].clone(),
                    to: self.names[e.to].clone(),
                    time: e.time as i64,
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// JSON form

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub id: String,
    pub d: i64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub time: i64,
}

/// Serialized graph, exactly as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub targets: Vec<TargetSpec>,
    pub edges: Vec<EdgeSpec>,
}

impl GraphFile {
    /// Every invariant violation, each naming the offending field.
    pub fn violations(&self) -> Vec<GraphError> {
        let mut out = Vec::new();
        let mut ids = HashMap::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if ids.insert(v.as_str(), i).is_some() {
                out.push(GraphError::invariant("vertices", format!("duplicate vertex id {v:?}")));
            }
        }
        if self.targets.is_empty() {
            out.push(GraphError::invariant("targets", "at least one target is required"));
        }
        let mut seen_targets = HashMap::new();
        for t in &self.targets {
            if !ids.contains_key(t.id.as_str()) {
                out.push(GraphError::invariant("targets.id", format!("target {:?} is not a vertex", t.id)));
            }
            if seen_targets.insert(t.id.as_str(), ()).is_some() {
                out.push(GraphError::invariant("targets.id", format!("duplicate target {:?}", t.id)));
            }
            if t.d < 1 || t.d > u32::MAX as i64 {
                out.push(GraphError::invariant("targets.d", format!("attack time d must be ≥ 1 (target {:?})", t.id)));
            }
            if !(t.alpha.is_finite() && t.alpha > 0.0) {
                out.push(GraphError::invariant(
                    "targets.alpha",
                    format!("cost alpha must be > 0 and finite (target {:?})", t.id),
                ));
            }
        }
        let mut seen_edges = HashMap::new();
        for e in &self.edges {
            for end in [&e.from, &e.to] {
                if !ids.contains_key(end.as_str()) {
                    out.push(GraphError::invariant("edges", format!("edge endpoint {end:?} is not a vertex")));
                }
            }
            if e.time < 1 || e.time > u32::MAX as i64 {
                out.push(GraphError::invariant(
                    "edges.time",
                    format!("travel_time must be ≥ 1 (edge {:?} -> {:?})", e.from, e.to),
                ));
            }
            if seen_edges.insert((e.from.as_str(), e.to.as_str()), ()).is_some() {
                out.push(GraphError::invariant("edges", format!("duplicate edge {:?} -> {:?}", e.from, e.to)));
            }
        }
        out
    }

    pub fn into_graph(self) -> Result<PatrollingGraph, GraphError> {
        if let Some(e) = self.violations().into_iter().next() {
            return Err(e);
        }
        let index: HashMap<&str, usize> = self.vertices.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let targets = self
            .targets
            .iter()
            .map(|t| Target {
                vertex: index[t.id.as_str()],
                attack_time: t.d as u32,
                cost: t.alpha,
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                from: index[e.from.as_str()],
                to: index[e.to.as_str()],
                time: e.time as u32,
            })
            .collect();
        PatrollingGraph::new(self.vertices, targets, edges)
    }
}

pub fn parse_graph_file(bytes: &[u8]) -> Result<GraphFile, GraphError> {
    serde_json::from_slice(bytes).map_err(|e| GraphError::Schema(e.to_string()))
}

pub fn load_graph(bytes: &[u8]) -> Result<PatrollingGraph, GraphError> {
    parse_graph_file(bytes)?.into_graph()
}

pub fn save_graph(g: &PatrollingGraph) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&g.to_file()).expect("graph serialization cannot fail");
    out.push(b'\n');
    out
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub strongly_connected: bool,
    pub targets_reachable: bool,
    pub unreachable_targets: Vec<String>,
    pub dead_ends: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(g: &PatrollingGraph) -> ValidationReport {
    let unreachable: Vec<String> = g
        .unreachable_targets()
        .into_iter()
        .map(|k| g.name(g.targets()[k].vertex).to_string())
        .collect();
    let dead_ends: Vec<String> = (0..g.n_vertices())
        .filter(|&v| g.out_edges(v).is_empty())
        .map(|v| g.name(v).to_string())
        .collect();
    let mut violations = Vec::new();
    for t in &unreachable {
        violations.push(format!("target {t:?} is not reachable from every vertex by a walk of positive length"));
    }
    for v in &dead_ends {
        violations.push(format!("vertex {v:?} has no outgoing edges"));
    }
    ValidationReport {
        violations,
        strongly_connected: g.is_strongly_connected(),
        targets_reachable: unreachable.is_empty(),
        unreachable_targets: unreachable,
        dead_ends,
    }
}

/// Validates a raw file: structural invariants first, then graph-level checks.
pub fn validate_file(f: &GraphFile) -> ValidationReport {
    let errs = f.violations();
    if errs.is_empty() {
        if let Ok(g) = f.clone().into_graph() {
            return validate(&g);
        }
    }
    ValidationReport {
        violations: errs.iter().map(|e| e.to_string()).collect(),
        strongly_connected: false,
        targets_reachable: false,
        unreachable_targets: Vec::new(),
        dead_ends: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// changing environment

/// A pair of graphs over the same vertices, targets and attack times.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangingEnvironment {
    pub g1: PatrollingGraph,
    pub g2: PatrollingGraph,
}

impl ChangingEnvironment {
    pub fn new(g1: PatrollingGraph, g2: PatrollingGraph) -> Result<Self, GraphError> {
        if g1.names != g2.names {
            return Err(GraphError::invariant("vertices", "g1 and g2 must share identical vertices"));
        }
        let same_targets = g1.targets.len() == g2.targets.len()
            && g1
                .targets
                .iter()
                .zip(&g2.targets)
                .all(|(a, b)| a.vertex == b.vertex && a.attack_time == b.attack_time);
        if !same_targets {
            return Err(GraphError::invariant("targets", "g1 and g2 must share targets and attack times"));
        }
        Ok(Self { g1, g2 })
    }

    /// Largest cost over both graphs.
    pub fn alpha_max(&self) -> f64 {
        self.g1.alpha_max().max(self.g2.alpha_max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_json(time: i64) -> String {
        format!(
            r#"{{"vertices":["v1","v2","v3"],
               "targets":[{{"id":"v1","d":6,"alpha":100}},{{"id":"v2","d":6,"alpha":100}},{{"id":"v3","d":6,"alpha":100}}],
               "edges":[{{"from":"v1","to":"v2","time":{time}}},{{"from":"v2","to":"v3","time":2}},{{"from":"v3","to":"v1","time":2}}]}}"#
        )
    }

    #[test]
    fn loads_and_round_trips() {
        let g = load_graph(triangle_json(2).as_bytes()).unwrap();
        assert_eq!(g.n_vertices(), 3);
        assert_eq!(g.alpha_max(), 100.0);
        assert_eq!(g.d_max(), 6);
        let again = load_graph(&save_graph(&g)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn zero_travel_time_is_rejected() {
        let err = load_graph(triangle_json(0).as_bytes()).unwrap_err();
        assert!(err.to_string().contains("travel_time must be ≥ 1"), "{err}");
        assert!(err.to_string().contains("edges.time"));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let src = r#"{"vertices":["a"],"targets":[{"id":"a","d":1,"alpha":1}],"edges":[],"extra":1}"#;
        assert!(matches!(load_graph(src.as_bytes()), Err(GraphError::Schema(_))));
    }

    #[test]
    fn fractional_time_is_a_schema_error() {
        let src = r#"{"vertices":["a"],"targets":[{"id":"a","d":1,"alpha":1}],"edges":[{"from":"a","to":"a","time":1.5}]}"#;
        assert!(matches!(load_graph(src.as_bytes()), Err(GraphError::Schema(_))));
    }

    #[test]
    fn single_vertex_without_edges_is_invalid() {
        let src = r#"{"vertices":["a"],"targets":[{"id":"a","d":3,"alpha":1}],"edges":[]}"#;
        let g = load_graph(src.as_bytes()).unwrap();
        let r = validate(&g);
        assert!(!r.is_valid());
        assert!(!r.targets_reachable);
        assert_eq!(r.unreachable_targets, vec!["a".to_string()]);
    }

    #[test]
    fn bad_target_names_field() {
        let src = r#"{"vertices":["a"],"targets":[{"id":"zz","d":3,"alpha":1}],"edges":[]}"#;
        let err = load_graph(src.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("targets.id"));
    }

    #[test]
    fn environment_requires_matching_targets() {
        let g1 = load_graph(triangle_json(2).as_bytes()).unwrap();
        let mut f = g1.to_file();
        f.targets[0].d = 7;
        let g2 = f.into_graph().unwrap();
        assert!(ChangingEnvironment::new(g1.clone(), g2).is_err());
        assert!(ChangingEnvironment::new(g1.clone(), g1).is_ok());
    }
}
