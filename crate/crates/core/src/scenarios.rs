//! Named scenario registry. Graph and strategy fixtures are embedded so tools
//! and tests need no files on disk.

use crate::error::{GraphError, Result};
use crate::graph::{load_graph, PatrollingGraph};
use crate::strategy::{load_strategy, RegularStrategy};

/// Seed of the `city15` fixture: `gen_city(15, 72, 80, 100, 64, CITY15_SEED)`.
pub const CITY15_SEED: u64 = 1;

const TRI_G1: &str = include_str!("../fixtures/tri_g1.json");
const TRI_G2: &str = include_str!("../fixtures/tri_g2.json");
const TRI_SIGMA1: &str = include_str!("../fixtures/tri_sigma1.json");
const TRI_SIGMA2: &str = include_str!("../fixtures/tri_sigma2.json");
const BUILDING1: &str = include_str!("../fixtures/building1.json");
const BUILDING2: &str = include_str!("../fixtures/building2.json");
const BUILDING3: &str = include_str!("../fixtures/building3.json");
const CITY15: &str = include_str!("../fixtures/city15.json");

pub const GRAPH_NAMES: [&str; 6] = ["tri_g1", "tri_g2", "building1", "building2", "building3", "city15"];
pub const STRATEGY_NAMES: [&str; 2] = ["tri_sigma1", "tri_sigma2"];

pub fn graph_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "tri_g1" => TRI_G1,
        "tri_g2" => TRI_G2,
        "building1" => BUILDING1,
        "building2" => BUILDING2,
        "building3" => BUILDING3,
        "city15" => CITY15,
        _ => return None,
    })
}

pub fn graph(name: &str) -> Option<Result<PatrollingGraph, GraphError>> {
    graph_source(name).map(|s| load_graph(s.as_bytes()))
}

/// Strategy fixture together with the name of the graph it is defined over.
pub fn strategy(name: &str) -> Option<Result<(RegularStrategy, &'static str)>> {
    let (src, over) = match name {
        "tri_sigma1" => (TRI_SIGMA1, "tri_g1"),
        "tri_sigma2" => (TRI_SIGMA2, "tri_g2"),
        _ => return None,
    };
    let g = match graph(over)? {
        Ok(g) => g,
        Err(e) => return Some(Err(e.into())),
    };
    Some(load_strategy(src.as_bytes(), &g).map(|s| (s, over)))
}

/// Switching-example triangle: all six directed edges of time 2, d = 6, costs 100.
pub fn triangle_g1() -> PatrollingGraph {
    load_graph(TRI_G1.as_bytes()).expect("embedded fixture")
}

/// Triangle with the edge v2 -> v3 removed.
pub fn triangle_g2() -> PatrollingGraph {
    load_graph(TRI_G2.as_bytes()).expect("embedded fixture")
}

/// Clockwise cycle v1 -> v2 -> v3 -> v1 over `triangle_g1`.
pub fn triangle_sigma1() -> RegularStrategy {
    load_strategy(TRI_SIGMA1.as_bytes(), &triangle_g1()).expect("embedded fixture")
}

/// Anticlockwise cycle v1 -> v3 -> v2 -> v1 over `triangle_g2`.
pub fn triangle_sigma2() -> RegularStrategy {
    load_strategy(TRI_SIGMA2.as_bytes(), &triangle_g2()).expect("embedded fixture")
}
