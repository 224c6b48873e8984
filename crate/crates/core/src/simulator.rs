//! Seeded Monte Carlo simulation of asynchronous averaging.
//!
//! Each global step draws a fresh delay for every link and applies the block
//! action of the sampled modal matrix to the stacked history directly:
//! `x_i(k+1) = a_ii x_i(k) + Σ_j a_ij x_j(k − l_ij + 1)`, then shifts the
//! history down one block. History starts as `q` copies of `x(0)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::switched_model::{DelayDistribution, ModeAssignment};
use crate::topology::WeightMatrix;

/// Recorded alongside simulation output so runs can be reproduced elsewhere.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9): run r uses seed_from_u64(seed) \
    with set_stream(r); each step draws one f64 per link in row-major link order";

/// Release builds check trajectory bounds every this many steps.
const BOUNDS_CHECK_INTERVAL: u64 = 1024;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub weights: WeightMatrix,
    pub delays: DelayDistribution,
    pub x0: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    /// Convergence threshold on the spread of the augmented state.
    pub tol: f64,
    pub max_iters: u64,
    /// Record every k-th state; 0 records nothing.
    pub trajectory_stride: u64,
}

impl SimulationConfig {
    pub fn new(weights: WeightMatrix, delays: DelayDistribution, x0: Vec<f64>) -> Self {
        Self {
            weights,
            delays,
            x0,
            runs: 1000,
            seed: 0,
            tol: 1e-10,
            max_iters: 1_000_000,
            trajectory_stride: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.weights.n();
        if self.x0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: self.x0.len() });
        }
        if self.x0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("initial state must be finite".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !self.weights.is_connected() {
            return Err(Error::NotConnected);
        }
        Ok(())
    }
}

/// Stacked history `[x(k); x(k−1); ...; x(k−q+1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    y: Vec<f64>,
    n: usize,
    k: u64,
}

impl AugmentedState {
    pub fn new(x0: &[f64], q: usize) -> Self {
        Self { y: x0.repeat(q), n: x0.len(), k: 0 }
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn current(&self) -> &[f64] {
        &self.y[..self.n]
    }

    /// `max − min` over every component, stale history included.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    fn push(&mut self, next: &[f64]) {
        let len = self.y.len();
        self.y.copy_within(0..len - self.n, self.n);
        self.y[..self.n].copy_from_slice(next);
        self.k += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub k: u64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Mean of the current-time block at termination.
    pub consensus_value: f64,
    pub iters: u64,
    pub converged: bool,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub results: Vec<RunResult>,
    pub empirical_mean: f64,
    /// Sample standard deviation; 0 when fewer than two runs.
    pub empirical_std: f64,
    pub std_defined: bool,
    pub not_converged: usize,
    /// Per recorded step, the node-wise mean across runs. Runs that stopped
    /// early contribute their final state.
    pub mean_trajectory: Option<Vec<TrajectoryPoint>>,
}

/// Independent random stream for run `run` of an ensemble seeded with `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn cumulative(delays: &DelayDistribution) -> Vec<f64> {
    delays
        .pi()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Draws a 1-based delay index from a cumulative table.
fn sample_delay<R: Rng + ?Sized>(cum: &[f64], pi: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    match cum.iter().position(|&c| u < c) {
        Some(idx) => idx + 1,
        // u landed in the rounding gap above the last partial sum
        None => pi.iter().rposition(|&p| p > 0.0).expect("distribution has positive mass") + 1,
    }
}

/// Draws one delay per link independently from `π`.
pub fn sample_mode<R: Rng + ?Sized>(
    delays: &DelayDistribution,
    links: &[(usize, usize)],
    rng: &mut R,
) -> ModeAssignment {
    let cum = cumulative(delays);
    let draws: Vec<usize> = links.iter().map(|_| sample_delay(&cum, delays.pi(), rng)).collect();
    ModeAssignment::from_parts(links, &draws)
}

struct NodeRow {
    self_weight: f64,
    neighbors: Vec<(usize, f64)>,
}

fn node_rows(a: &WeightMatrix) -> Vec<NodeRow> {
    let n = a.n();
    (0..n)
        .map(|i| NodeRow {
            self_weight: a.get(i, i),
            neighbors: (0..n).filter(|&j| j != i && a.get(i, j) != 0.0).map(|j| (j, a.get(i, j))).collect(),
        })
        .collect()
}

fn common_depth(laws: &[DelayDistribution]) -> Result<usize> {
    let first = laws.first().ok_or(Error::EmptyDistribution)?;
    for law in laws {
        if law.q() != first.q() {
            return Err(Error::DepthMismatch { expected: first.q(), actual: law.q() });
        }
    }
    Ok(first.q())
}

/// One sample path under i.i.d. delays from `config.delays`.
pub fn run_single<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Result<RunResult> {
    run_single_with_laws(config, std::slice::from_ref(&config.delays), rng)
}

/// One sample path where step `k` draws delays from `laws[k % laws.len()]`.
/// Delays stay independent across links and steps but need not be
/// identically distributed.
pub fn run_single_with_laws<R: Rng + ?Sized>(
    config: &SimulationConfig,
    laws: &[DelayDistribution],
    rng: &mut R,
) -> Result<RunResult> {
    config.validate()?;
    let q = common_depth(laws)?;
    Ok(simulate_path(config, laws, q, rng))
}

fn simulate_path<R: Rng + ?Sized>(
    config: &SimulationConfig,
    laws: &[DelayDistribution],
    q: usize,
    rng: &mut R,
) -> RunResult {
    let n = config.weights.n();
    let rows = node_rows(&config.weights);
    let tables: Vec<Vec<f64>> = laws.iter().map(cumulative).collect();
    let lo = config.x0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = config.x0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));

    let stride = config.trajectory_stride;
    let mut state = AugmentedState::new(&config.x0, q);
    let mut trajectory = (stride > 0).then(|| vec![TrajectoryPoint { k: 0, x: config.x0.clone() }]);
    let mut next = vec![0.0; n];
    let mut converged = state.spread() <= config.tol;

    while !converged && state.k < config.max_iters {
        let law = (state.k % laws.len() as u64) as usize;
        let (cum, pi) = (&tables[law], laws[law].pi());
        let y = state.y();
        for (i, row) in rows.iter().enumerate() {
            let mut acc = row.self_weight * y[i];
            for &(j, w) in &row.neighbors {
                let l = if q == 1 { 1 } else { sample_delay(cum, pi, rng) };
                acc += w * y[(l - 1) * n + j];
            }
            next[i] = acc;
        }
        state.push(&next);

        if cfg!(debug_assertions) || state.k % BOUNDS_CHECK_INTERVAL == 0 {
            assert!(
                next.iter().all(|&v| v >= lo - slack && v <= hi + slack),
                "state left the convex hull of x(0) at step {}",
                state.k
            );
        }
        if let Some(points) = trajectory.as_mut() {
            if state.k % stride == 0 {
                points.push(TrajectoryPoint { k: state.k, x: next.clone() });
            }
        }
        converged = state.spread() <= config.tol;
    }

    RunResult {
        consensus_value: state.current().iter().sum::<f64>() / n as f64,
        iters: state.k,
        converged,
        trajectory,
    }
}

/// Runs `config.runs` independent replicas in parallel.
pub fn run_ensemble(config: &SimulationConfig) -> Result<EnsembleResult> {
    run_ensemble_with_laws(config, std::slice::from_ref(&config.delays))
}

pub fn run_ensemble_with_laws(config: &SimulationConfig, laws: &[DelayDistribution]) -> Result<EnsembleResult> {
    config.validate()?;
    let q = common_depth(laws)?;
    let results: Vec<RunResult> = (0..config.runs as u64)
        .into_par_iter()
        .map(|run| simulate_path(config, laws, q, &mut run_rng(config.seed, run)))
        .collect();
    Ok(summarize(results, config.trajectory_stride))
}

fn summarize(results: Vec<RunResult>, stride: u64) -> EnsembleResult {
    let runs = results.len();
    let empirical_mean = results.iter().map(|r| r.consensus_value).sum::<f64>() / runs as f64;
    let std_defined = runs > 1;
    let empirical_std = if std_defined {
        let ss: f64 = results.iter().map(|r| (r.consensus_value - empirical_mean).powi(2)).sum();
        (ss / (runs - 1) as f64).sqrt()
    } else {
        0.0
    };
    let not_converged = results.iter().filter(|r| !r.converged).count();
    let mean_trajectory = (stride > 0).then(|| mean_trajectory(&results, stride));
    EnsembleResult { results, empirical_mean, empirical_std, std_defined, not_converged, mean_trajectory }
}

fn mean_trajectory(results: &[RunResult], stride: u64) -> Vec<TrajectoryPoint> {
    let paths: Vec<&[TrajectoryPoint]> = results.iter().filter_map(|r| r.trajectory.as_deref()).collect();
    let len = paths.iter().map(|p| p.len()).max().unwrap_or(0);
    let n = paths.first().map_or(0, |p| p[0].x.len());
    (0..len)
        .map(|t| {
            let mut x = vec![0.0; n];
            for path in &paths {
                let point = &path[t.min(path.len() - 1)];
                for (acc, v) in x.iter_mut().zip(&point.x) {
                    *acc += v;
                }
            }
            x.iter_mut().for_each(|v| *v /= paths.len() as f64);
            TrajectoryPoint { k: t as u64 * stride, x }
        })
        .collect()
}
