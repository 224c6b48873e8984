use thiserror::Error;

/// Failures raised by model construction, analysis, and simulation.
///
/// Node and column indices are 0-based here; reports convert to 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows} rows, row {row} has {cols} columns)")]
    NotSquare { rows: usize, row: usize, cols: usize },
    #[error("matrix must have at least one row")]
    EmptyMatrix,
    #[error("entry ({0}, {1}) is negative")]
    NegativeEntry(usize, usize),
    #[error("entry ({0}, {1}) is not a finite number")]
    NonFiniteEntry(usize, usize),
    #[error("row {0} sums to {1}, expected 1")]
    RowSumViolation(usize, f64),
    #[error("column {0} sums to {1}, expected 1")]
    ColSumViolation(usize, f64),
    #[error("zero pattern mismatch at ({0}, {1})")]
    PatternMismatch(usize, usize),

    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("edge endpoint {endpoint} out of range for {n} nodes")]
    EndpointOutOfRange { endpoint: usize, n: usize },
    #[error("{kind} graph needs at least {min} nodes, got {n}")]
    GraphTooSmall { kind: &'static str, min: usize, n: usize },

    #[error("delay distribution must have at least one entry")]
    EmptyDistribution,
    #[error("delay probability pi[{0}] = {1} is negative or not finite")]
    InvalidProbability(usize, f64),
    #[error("delay probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("memory depth q must be at least 1")]
    InvalidDepth,
    #[error("memory depth mismatch: expected q = {expected}, got {actual}")]
    DepthMismatch { expected: usize, actual: usize },

    #[error("mode assignment does not match the nonzero off-diagonal pattern at ({0}, {1})")]
    AssignmentPatternMismatch(usize, usize),
    #[error("delay index {l} out of range 1..={q}")]
    DelayOutOfRange { l: usize, q: usize },
    #[error("enumeration of {q}^{m} modes exceeds the cap of {cap}")]
    EnumerationTooLarge { q: usize, m: usize, cap: usize },

    #[error("interaction graph is not connected")]
    NotConnected,
    #[error("mean matrix is not ergodic (spectral gap {0:e} below 1e-9)")]
    NotErgodic(f64),
    #[error("eigenvalue computation did not converge")]
    EigenFailure,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
