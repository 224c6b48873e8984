//! Expected-error analysis of asynchronous distributed averaging.
//!
//! Nodes average over an undirected graph with a doubly stochastic weight
//! matrix `A`, but read neighbor values that may be up to `q − 1` steps
//! stale, with the delay on every link drawn i.i.d. from `π`. The stacked
//! history then evolves as a stochastic switched linear system whose mean
//! matrix determines the expected consensus value.
//!
//! - [`topology`]: graphs, weight matrices, diagonal statistics.
//! - [`switched_model`]: modal matrices, mode probabilities, the mean matrix
//!   by enumeration and by the reduced construction.
//! - [`error_analysis`]: stationary weights, expected consensus, error bound.
//! - [`simulator`]: seeded Monte Carlo ensembles of the switched system.
//! - [`export`]: deterministic CSV output.

pub mod error;
pub mod error_analysis;
pub mod export;
pub mod fixtures;
mod numeric;
pub mod simulator;
pub mod switched_model;
pub mod topology;

pub use error::{Error, Result};
pub use error_analysis::{
    analyze, eigen_residual, error_bound, expected_async_average, spectral_gap, stationary_row_vector,
    stationary_weights, AnalysisReport, StationaryWeights,
};
pub use simulator::{
    run_ensemble, run_ensemble_with_laws, run_single, run_single_with_laws, sample_mode, AugmentedState,
    EnsembleResult, RunResult, SimulationConfig, TrajectoryPoint,
};
pub use switched_model::{
    build_modal_matrix, enumerate_modes, mean_matrix_enumerated, mean_matrix_reduced, mode_probability,
    Construction, DelayDistribution, MeanMatrix, ModalMatrix, ModeAssignment,
};
pub use topology::{diag_stats, metropolis_weights, validate_weight_matrix, DiagStats, Graph, WeightMatrix};
