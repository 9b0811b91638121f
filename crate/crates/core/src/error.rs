use thiserror::Error;

/// Errors raised while building or loading a patrolling graph.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("{field}: {message}")]
    Invariant { field: String, message: String },
    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),
}

impl GraphError {
    pub(crate) fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        GraphError::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Errors raised by strategy construction, evaluation and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("strategy: {0}")]
    Strategy(String),
    #[error("augmented vertex ({vertex}, {mem}) has no outgoing edges")]
    DeadEnd { vertex: String, mem: usize },
    #[error("target {0} is not reachable from every vertex")]
    UnreachableTarget(String),
    #[error("{0} is not a target")]
    NotATarget(String),
    #[error("memory sizes differ: {0} vs {1}")]
    MemMismatch(usize, usize),
    #[error("strategy does not match the graph topology")]
    TopologyMismatch,
    #[error("support edge {from} -> {to} is missing from the changed graph")]
    NotExecutable { from: String, to: String },
    #[error("empty steal table")]
    EmptyTable,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no switch possible from augmented vertex ({vertex}, {mem})")]
    NoSwitch { vertex: String, mem: usize },
    #[error("instance too large: more than {0} tree nodes")]
    TooLarge(usize),
    #[error("{0}")]
    Infeasible(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
