//! Synthesis, evaluation and switching of randomized finite-memory patrolling
//! strategies on changing patrolling graphs, with security-hole upper bounds
//! and simulation oracles.

pub mod error;
pub mod evaluator;
pub mod generators;
pub mod graph;
pub mod hole;
pub mod rng;
pub mod scc;
pub mod scenarios;
pub mod sim;
pub mod strategy;
pub mod synthesizer;
pub mod switcher;

pub use error::{Error, GraphError, Result};
pub use graph::{ChangingEnvironment, PatrollingGraph};
pub use strategy::{AugmentedVertex, ParamTable, RegularStrategy};
