//! Experiment configuration files.
//!
//! ```toml
//! pi = ["1/2", "1/2"]          # delay law; q = len(pi)
//! x0 = [1, 1, 1, 0, 0, 0]
//! runs = 1000
//! seed = 7
//! output_dir = "out/six-node"
//!
//! [topology]
//! graph = "ring(6)"            # ring(n) | path(n) | complete(n) | star(n)
//! weights = "metropolis"
//! # or an explicit matrix of numbers, decimal strings, or "p/q" rationals:
//! # matrix = [["1/3", "1/3", 0, ...], ...]
//! ```

use std::path::{Path, PathBuf};

use asyncavg::topology::{metropolis_weights, Graph, WeightMatrix};
use asyncavg::DelayDistribution;
use serde::Deserialize;

use crate::CliError;

/// A number written as a TOML integer, float, or a string holding a decimal
/// or a `p/q` rational.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    matrix: Option<Vec<Vec<Scalar>>>,
    graph: Option<String>,
    weights: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    topology: RawTopology,
    q: Option<usize>,
    pi: Vec<Scalar>,
    x0: Vec<Scalar>,
    runs: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    max_iters: Option<u64>,
    trajectory_stride: Option<u64>,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub weights: WeightMatrix,
    /// `"ring(6) metropolis"` or `"matrix"`.
    pub topology_label: String,
    pub delays: DelayDistribution,
    pub x0: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: u64,
    pub trajectory_stride: u64,
    pub output_dir: Option<PathBuf>,
}

/// Parses `"0.25"`, `"5/12"`, or `"-3"`.
pub fn parse_number(text: &str) -> Option<f64> {
    let text = text.trim();
    match text.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().ok()?;
            let q: i64 = q.trim().parse().ok()?;
            (q != 0).then(|| p as f64 / q as f64)
        }
        None => text.parse::<f64>().ok().filter(|x| x.is_finite()),
    }
}

fn scalar(value: &Scalar, field: &str) -> Result<f64, CliError> {
    match value {
        Scalar::Int(i) => Ok(*i as f64),
        Scalar::Float(f) => Ok(*f),
        Scalar::Text(t) => {
            parse_number(t).ok_or_else(|| CliError::Parse(format!("{field}: cannot read '{t}' as a number")))
        }
    }
}

fn scalars(values: &[Scalar], field: &str) -> Result<Vec<f64>, CliError> {
    values.iter().enumerate().map(|(i, v)| scalar(v, &format!("{field}[{i}]"))).collect()
}

/// Parses `ring(6)`, `path(4)`, `complete(3)`, `star(5)`.
pub fn parse_named_graph(text: &str) -> Result<Graph, CliError> {
    let bad = || CliError::Parse(format!("topology.graph: expected ring(n), path(n), complete(n) or star(n), got '{text}'"));
    let (kind, rest) = text.trim().split_once('(').ok_or_else(bad)?;
    let n: usize = rest.strip_suffix(')').ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let graph = match kind.trim() {
        "ring" => Graph::ring(n),
        "path" => Graph::path(n),
        "complete" => Graph::complete(n),
        "star" => Graph::star(n),
        _ => return Err(bad()),
    };
    graph.map_err(|e| CliError::Domain(format!("topology.graph: {e}")))
}

fn build_weights(topology: &RawTopology) -> Result<(WeightMatrix, String), CliError> {
    match (&topology.matrix, &topology.graph) {
        (Some(rows), None) => {
            if topology.weights.is_some() {
                return Err(CliError::Parse("topology.weights applies only to a named graph".into()));
            }
            let rows: Vec<Vec<f64>> = rows
                .iter()
                .enumerate()
                .map(|(i, row)| scalars(row, &format!("topology.matrix[{i}]")))
                .collect::<Result<_, _>>()?;
            let a = WeightMatrix::from_rows(&rows, None).map_err(|e| CliError::Domain(format!("topology.matrix: {e}")))?;
            Ok((a, "matrix".to_string()))
        }
        (None, Some(text)) => {
            let graph = parse_named_graph(text)?;
            match topology.weights.as_deref().unwrap_or("metropolis") {
                "metropolis" => Ok((metropolis_weights(&graph), format!("{} metropolis", text.trim()))),
                other => Err(CliError::Parse(format!("topology.weights: unknown rule '{other}' (expected 'metropolis')"))),
            }
        }
        _ => Err(CliError::Parse("topology: give exactly one of 'matrix' or 'graph'".into())),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        let (weights, topology_label) = build_weights(&raw.topology)?;

        let pi = scalars(&raw.pi, "pi")?;
        if let Some(q) = raw.q {
            if q != pi.len() {
                return Err(CliError::Parse(format!("q = {q} but pi has {} entries", pi.len())));
            }
        }
        let delays = DelayDistribution::new(pi).map_err(|e| CliError::Domain(format!("pi: {e}")))?;

        let x0 = scalars(&raw.x0, "x0")?;
        if x0.len() != weights.n() {
            return Err(CliError::Domain(format!("x0: has {} entries but the topology has {} nodes", x0.len(), weights.n())));
        }

        Ok(Self {
            weights,
            topology_label,
            delays,
            x0,
            runs: raw.runs.unwrap_or(1000),
            seed: raw.seed.unwrap_or(0),
            tol: raw.tol.unwrap_or(1e-10),
            max_iters: raw.max_iters.unwrap_or(1_000_000),
            trajectory_stride: raw.trajectory_stride.unwrap_or(0),
            output_dir: raw.output_dir,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.with_context(&path.display().to_string()))
    }
}
