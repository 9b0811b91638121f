use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use patrolswitch::graph::load_graph;
use patrolswitch::strategy::load_strategy;
use patrolswitch::{scenarios, PatrollingGraph, RegularStrategy};
use serde::Serialize;
use serde_json::Value;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_COMPUTE: u8 = 3;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub err: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.err)
    }
}

/// Library errors surfacing mid-command are computation failures.
impl From<patrolswitch::Error> for Failure {
    fn from(e: patrolswitch::Error) -> Self {
        Failure { code: EXIT_COMPUTE, err: e.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_COMPUTE, err: e.into() }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn input(self) -> CmdResult<T>;
    fn compute(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> CmdResult<T> {
        self.map_err(|e| Failure { code: EXIT_INPUT, err: e.into() })
    }

    fn compute(self) -> CmdResult<T> {
        self.map_err(|e| Failure { code: EXIT_COMPUTE, err: e.into() })
    }
}

pub fn bad_input<T>(msg: String) -> CmdResult<T> {
    Err(Failure { code: EXIT_INPUT, err: anyhow!(msg) })
}

/// Loads a graph from a file, falling back to the built-in scenario registry.
pub fn graph_arg(arg: &str) -> CmdResult<PatrollingGraph> {
    let p = Path::new(arg);
    if p.is_file() {
        let bytes = fs::read(p).with_context(|| format!("cannot read graph file {arg}")).input()?;
        return load_graph(&bytes).with_context(|| format!("invalid graph file {arg}")).input();
    }
    match scenarios::graph(arg) {
        Some(g) => g.with_context(|| format!("built-in graph {arg}")).input(),
        None => bad_input(format!("no such graph file: {arg}")),
    }
}

pub fn strategy_arg(arg: &str, g: &PatrollingGraph) -> CmdResult<RegularStrategy> {
    let p = Path::new(arg);
    if p.is_file() {
        let bytes = fs::read(p).with_context(|| format!("cannot read strategy file {arg}")).input()?;
        return load_strategy(&bytes, g).with_context(|| format!("invalid strategy file {arg}")).input();
    }
    match scenarios::strategy(arg) {
        Some(s) => s.and_then(|(s, _)| s.on_graph(g)).with_context(|| format!("built-in strategy {arg}")).input(),
        None => bad_input(format!("no such strategy file: {arg}")),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub timings_ms: BTreeMap<String, f64>,
}

pub const MANIFEST: &str = "manifest.json";

/// Collects artifacts of one command and the manifest describing them.
pub struct Run {
    out: Option<PathBuf>,
    pub manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, config: Value, out: Option<PathBuf>) -> Self {
        Run {
            out,
            manifest: RunManifest {
                command: command.into(),
                argv: std::env::args().collect(),
                config,
                seeds: Vec::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                version: env!("CARGO_PKG_VERSION").into(),
                timings_ms: BTreeMap::new(),
            },
        }
    }

    pub fn input(&mut self, arg: &str) {
        self.manifest.inputs.push(arg.into());
    }

    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.manifest.timings_ms.insert(name.into(), t.elapsed().as_secs_f64() * 1e3);
        out
    }

    /// Writes an artifact when an output location was given.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CmdResult {
        let Some(dir) = &self.out else { return Ok(()) };
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display())).compute()?;
        self.manifest.outputs.push(path.display().to_string());
        Ok(())
    }

    /// JSON artifact carrying a reference to the manifest.
    pub fn write_json(&mut self, name: &str, v: &Value) -> CmdResult {
        let mut v = v.clone();
        if let (Some(obj), Some(_)) = (v.as_object_mut(), &self.out) {
            obj.insert("manifest".into(), Value::String(MANIFEST.into()));
        }
        self.write(name, &pretty(&v))
    }

    pub fn finish(self) -> CmdResult {
        self.finish_as(MANIFEST)
    }

    pub fn finish_as(self, name: &str) -> CmdResult {
        let Some(dir) = &self.out else { return Ok(()) };
        let path = dir.join(name);
        let bytes = pretty(&serde_json::to_value(&self.manifest).expect("manifest serializes"));
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display())).compute()
    }
}

pub fn out_dir(out: &Option<PathBuf>) -> CmdResult<Option<PathBuf>> {
    if let Some(d) = out {
        fs::create_dir_all(d).with_context(|| format!("cannot create output directory {}", d.display())).input()?;
    }
    Ok(out.clone())
}

pub fn pretty(v: &Value) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("json value serializes");
    b.push(b'\n');
    b
}
