//! Expected asynchronous average and the upper bound on the expected
//! average error.
//!
//! The left eigenvector of `W̄` for eigenvalue one has closed form
//! `w* = [1ᵀ, 1ᵀ(I − W̄_11), ..., 1ᵀ(I − W̄_11 − ... − W̄_1(q−1))]`.
//! Summing its blocks gives `(w*)′ = [1 + c(1 − a_ii)]_i`, whose normalized
//! form weights `x(0)` to produce `E[x*]`. The error against the exact average
//! is then bounded using only the diagonal of `A` and `‖x(0)‖∞`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::switched_model::{mean_matrix_reduced, DelayDistribution, MeanMatrix};
use crate::topology::{diag_stats, WeightMatrix};

/// Smallest spectral gap of `W̄` accepted as ergodic.
pub const ERGODIC_GAP_TOL: f64 = 1e-9;

/// Squarings in the spectral radius fallback; the estimate uses powers up to `2^(N-1)`.
const GELFAND_SQUARINGS: usize = 48;

/// Aggregated stationary weights `(w*)′` and their normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryWeights {
    /// `(w*)′_i = 1 + c(1 − a_ii)`
    pub w_prime: Vec<f64>,
    /// `d = n((1 + c) − c·ā)`
    pub d: f64,
    pub w_prime_normal: Vec<f64>,
}

/// `1 − |λ₂|` for the eigenvalues of `m` sorted by modulus.
pub fn spectral_gap(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 1 {
        return Ok(1.0);
    }
    if let Some(schur) = m.clone().try_schur(1e-14, 100_000) {
        let mut moduli: Vec<f64> = schur.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        return Ok(1.0 - moduli[1]);
    }
    deflated_gap(m)
}

/// Fallback for row-stochastic `m`: removes the unit eigenvalue using the
/// normalized left eigenvector, then estimates the spectral radius of the
/// remainder with Gelfand's formula by repeated squaring.
fn deflated_gap(m: &DMatrix<f64>) -> Result<f64> {
    let dim = m.nrows();
    let mut system = m.transpose() - DMatrix::identity(dim, dim);
    system.row_mut(dim - 1).fill(1.0);
    let mut rhs = DVector::zeros(dim);
    rhs[dim - 1] = 1.0;
    let Some(v) = system.lu().solve(&rhs) else {
        return Ok(0.0);
    };
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let mut power = m - DVector::from_element(dim, 1.0) * v.transpose();
    let mut log_scale = 0.0;
    let mut exponent = 1.0;
    let mut log_radius = f64::NEG_INFINITY;
    for _ in 0..GELFAND_SQUARINGS {
        let norm = power.norm();
        if norm == 0.0 {
            return Ok(1.0);
        }
        log_radius = (log_scale + norm.ln()) / exponent;
        power /= norm;
        log_scale += norm.ln();
        power = &power * &power;
        log_scale *= 2.0;
        exponent *= 2.0;
    }
    Ok(1.0 - log_radius.exp())
}

/// Connectivity and ergodicity gate; returns the spectral gap of `W̄`.
fn check_ergodic(a: &WeightMatrix, mean: &MeanMatrix) -> Result<f64> {
    if !a.is_connected() {
        return Err(Error::NotConnected);
    }
    let gap = spectral_gap(mean.matrix())?;
    if gap < ERGODIC_GAP_TOL {
        return Err(Error::NotErgodic(gap));
    }
    Ok(gap)
}

fn closed_form_weights(a: &WeightMatrix, delays: &DelayDistribution) -> StationaryWeights {
    let c = delays.expected_delay();
    let stats = diag_stats(a);
    let n = a.n() as f64;
    let w_prime: Vec<f64> = stats.diag.iter().map(|a_ii| 1.0 + c * (1.0 - a_ii)).collect();
    let d = n * ((1.0 + c) - c * stats.mean_diag);
    let w_prime_normal = w_prime.iter().map(|w| w / d).collect();
    StationaryWeights { w_prime, d, w_prime_normal }
}

/// Closed-form stationary weights, after checking that `A` is connected and
/// `W̄` has a simple dominant eigenvalue.
pub fn stationary_weights(a: &WeightMatrix, delays: &DelayDistribution) -> Result<StationaryWeights> {
    check_ergodic(a, &mean_matrix_reduced(a, delays))?;
    Ok(closed_form_weights(a, delays))
}

/// Full unnormalized left eigenvector `w*` of `W̄` (length `nq`), assembled
/// block by block from the top row of `W̄`.
pub fn stationary_row_vector(mean: &MeanMatrix) -> Vec<f64> {
    let n = mean.n();
    let mut w = Vec::with_capacity(mean.dim());
    let mut current = vec![1.0; n];
    for l in 1..=mean.q() {
        w.extend_from_slice(&current);
        if l < mean.q() {
            let block = mean.block(l);
            for (j, cur) in current.iter_mut().enumerate() {
                *cur -= block.column(j).sum();
            }
        }
    }
    w
}

/// `‖w* W̄ − w*‖∞` for the closed-form `w*`.
pub fn eigen_residual(mean: &MeanMatrix) -> f64 {
    let w = nalgebra::RowDVector::from_vec(stationary_row_vector(mean));
    (&w * mean.matrix() - &w).amax()
}

pub fn expected_async_average(weights: &StationaryWeights, x0: &[f64]) -> Result<f64> {
    if weights.w_prime_normal.len() != x0.len() {
        return Err(Error::DimensionMismatch { expected: weights.w_prime_normal.len(), actual: x0.len() });
    }
    Ok(weights.w_prime_normal.iter().zip(x0).map(|(w, x)| w * x).sum())
}

/// `(c√n / d)·‖diag(A − ā I)‖·‖x(0)‖∞`.
///
/// Takes only the infinity norm of the initial state, never the state itself.
/// Diagonals equal within [`ZERO_ERROR_TOL`](crate::topology::ZERO_ERROR_TOL) give exactly zero.
pub fn error_bound(a: &WeightMatrix, delays: &DelayDistribution, x0_inf_norm: f64) -> f64 {
    assert!(x0_inf_norm >= 0.0, "infinity norm must be nonnegative, got {x0_inf_norm}");
    let c = delays.expected_delay();
    let stats = diag_stats(a);
    if c == 0.0 || stats.is_uniform() {
        return 0.0;
    }
    let n = a.n() as f64;
    let d = n * ((1.0 + c) - c * stats.mean_diag);
    c * n.sqrt() / d * stats.centered_norm * x0_inf_norm
}

/// Analytic summary for one `(A, π, x(0))` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub n: usize,
    pub q: usize,
    pub c: f64,
    pub d: f64,
    pub a_bar: f64,
    pub exact_average: f64,
    pub expected_async_average: f64,
    pub exact_expected_error: f64,
    pub bound: f64,
    pub zero_error_case: bool,
    pub spectral_gap: f64,
}

impl AnalysisReport {
    pub const KEYS: [&'static str; 11] = [
        "n",
        "q",
        "c",
        "d",
        "a_bar",
        "exact_average",
        "expected_async_average",
        "exact_expected_error",
        "bound",
        "zero_error_case",
        "spectral_gap",
    ];

    /// Values in [`Self::KEYS`] order, floats at 17 significant digits.
    pub fn values(&self) -> Vec<String> {
        use crate::export::fmt_f64;
        vec![
            self.n.to_string(),
            self.q.to_string(),
            fmt_f64(self.c),
            fmt_f64(self.d),
            fmt_f64(self.a_bar),
            fmt_f64(self.exact_average),
            fmt_f64(self.expected_async_average),
            fmt_f64(self.exact_expected_error),
            fmt_f64(self.bound),
            self.zero_error_case.to_string(),
            fmt_f64(self.spectral_gap),
        ]
    }

    /// One `key = value` line per field.
    pub fn to_key_value(&self) -> String {
        Self::KEYS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn csv_header() -> String {
        Self::KEYS.join(",")
    }

    pub fn csv_row(&self) -> String {
        self.values().join(",")
    }
}

pub fn analyze(a: &WeightMatrix, delays: &DelayDistribution, x0: &[f64]) -> Result<AnalysisReport> {
    let n = a.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: x0.len() });
    }
    let spectral_gap = check_ergodic(a, &mean_matrix_reduced(a, delays))?;
    let weights = closed_form_weights(a, delays);
    let stats = diag_stats(a);

    let exact_average = x0.iter().sum::<f64>() / n as f64;
    let expected = expected_async_average(&weights, x0)?;
    let inf_norm = x0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(AnalysisReport {
        n,
        q: delays.q(),
        c: delays.expected_delay(),
        d: weights.d,
        a_bar: stats.mean_diag,
        exact_average,
        expected_async_average: expected,
        exact_expected_error: (exact_average - expected).abs(),
        bound: error_bound(a, delays, inf_norm),
        zero_error_case: stats.is_uniform(),
        spectral_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::switched_model::mean_matrix_enumerated;
    use crate::topology::{metropolis_weights, random_connected_graph};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(pi: &[f64]) -> DelayDistribution {
        DelayDistribution::new(pi.to_vec()).unwrap()
    }

    fn random_pi<R: Rng>(q: usize, rng: &mut R) -> DelayDistribution {
        let raw: Vec<f64> = (0..q).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut pi: Vec<f64> = raw.iter().map(|x| x / total).collect();
        pi[0] = 1.0 - pi[1..].iter().sum::<f64>();
        dist(&pi)
    }

    #[test]
    fn deflated_gap_matches_schur() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let n = rng.random_range(2..=5);
            let a = metropolis_weights(&random_connected_graph(n, 0.5, &mut rng).unwrap());
            let q = rng.random_range(1..=3);
            let m = mean_matrix_reduced(&a, &random_pi(q, &mut rng));
            let schur = spectral_gap(m.matrix()).unwrap();
            let fallback = deflated_gap(m.matrix()).unwrap();
            assert!((schur - fallback).abs() < 1e-6, "{schur} vs {fallback}");
        }
    }

    #[test]
    fn deflated_gap_detects_non_ergodic() {
        let periodic = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(deflated_gap(&periodic).unwrap().abs() < 1e-9);
        assert_eq!(deflated_gap(&DMatrix::identity(3, 3)).unwrap(), 0.0);
    }

    /// Left Perron vector of a row-stochastic matrix by power iteration on
    /// the transpose, normalized to sum one.
    fn power_left_eigenvector(m: &DMatrix<f64>) -> Vec<f64> {
        let dim = m.nrows();
        let mt = m.transpose();
        let mut v = nalgebra::DVector::from_element(dim, 1.0 / dim as f64);
        for _ in 0..100_000 {
            let next = &mt * &v;
            let next = &next / next.sum();
            let delta = (&next - &v).amax();
            v = next;
            if delta < 1e-16 {
                break;
            }
        }
        v.iter().copied().collect()
    }

    /// Consensus reached by iterating the mean dynamics on the stacked state.
    fn power_consensus(m: &DMatrix<f64>, x0: &[f64], q: usize) -> f64 {
        let mut y = nalgebra::DVector::from_iterator(x0.len() * q, (0..q).flat_map(|_| x0.iter().copied()));
        for _ in 0..10_000 {
            y = m * y;
            if y.max() - y.min() < 1e-15 {
                break;
            }
        }
        y[0]
    }

    #[test]
    fn synchronous_weights_are_uniform() {
        let w = stationary_weights(&fixtures::six_node_nonidentical(), &DelayDistribution::synchronous()).unwrap();
        assert!(w.w_prime.iter().all(|&x| x == 1.0));
        assert_eq!(w.d, 6.0);
        assert!(w.w_prime_normal.iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn identical_diagonal_weights() {
        let pi = dist(&[0.2, 0.3, 0.5]);
        let c = pi.expected_delay();
        let w = stationary_weights(&fixtures::six_node_ring(), &pi).unwrap();
        for (wp, wn) in w.w_prime.iter().zip(&w.w_prime_normal) {
            assert!((wp - (1.0 + 2.0 * c / 3.0)).abs() < 1e-15);
            assert!((wn - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn three_node_weights_match_eigenvector_oracle() {
        let a = fixtures::three_node();
        let pi = dist(&[0.5, 0.5]);
        let w = stationary_weights(&a, &pi).unwrap();
        let expected = [1.2, 1.4, 1.2];
        for (x, e) in w.w_prime.iter().zip(expected) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!((w.d - 3.8).abs() < 1e-15);

        let mean = mean_matrix_reduced(&a, &pi);
        let v = power_left_eigenvector(mean.matrix());
        let aggregated: Vec<f64> = (0..3).map(|i| v[i] + v[3 + i]).collect();
        for (x, y) in aggregated.iter().zip(&w.w_prime_normal) {
            assert!((x - y).abs() < 1e-12, "{aggregated:?} vs {:?}", w.w_prime_normal);
        }
    }

    #[test]
    fn expected_average_cases() {
        let uniform = StationaryWeights { w_prime: vec![1.0; 4], d: 4.0, w_prime_normal: vec![0.25; 4] };
        assert_eq!(expected_async_average(&uniform, &[1.0, 2.0, 3.0, 6.0]).unwrap(), 3.0);
        assert_eq!(
            expected_async_average(&uniform, &[1.0]),
            Err(Error::DimensionMismatch { expected: 4, actual: 1 })
        );

        let w = stationary_weights(&fixtures::three_node(), &dist(&[0.5, 0.5])).unwrap();
        let e = expected_async_average(&w, &[1.0, 0.0, 0.0]).unwrap();
        assert!((e - 6.0 / 19.0).abs() < 1e-15);
    }

    #[test]
    fn six_node_expected_average_matches_mean_dynamics() {
        let a = fixtures::six_node_nonidentical();
        let pi = dist(&[0.5, 0.5]);
        let w = stationary_weights(&a, &pi).unwrap();
        let expected_w = [4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 31.0 / 24.0, 5.0 / 4.0, 31.0 / 24.0];
        for (x, e) in w.w_prime.iter().zip(expected_w) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!((w.d - 47.0 / 6.0).abs() < 1e-14);
        let x0 = fixtures::six_node_x0();
        let e = expected_async_average(&w, &x0).unwrap();
        assert!((e - 24.0 / 47.0).abs() < 1e-15);

        let mean = mean_matrix_enumerated(&a, &pi).unwrap();
        assert!((power_consensus(mean.matrix(), &x0, 2) - 24.0 / 47.0).abs() < 1e-12);
    }

    #[test]
    fn bound_cases() {
        assert_eq!(error_bound(&fixtures::six_node_ring(), &dist(&[0.1, 0.2, 0.7]), 3.0), 0.0);
        assert_eq!(error_bound(&fixtures::six_node_nonidentical(), &DelayDistribution::synchronous(), 1.0), 0.0);
        let b = error_bound(&fixtures::three_node(), &dist(&[0.5, 0.5]), 1.0);
        let oracle = 0.5 * 3f64.sqrt() / 3.8 * (24f64.sqrt() / 15.0);
        assert!((b - oracle).abs() < 1e-15);
        assert!((b - 0.07443).abs() < 1e-5);
    }

    #[test]
    fn analyze_identical_diagonal() {
        let r = analyze(&fixtures::six_node_ring(), &dist(&[0.3, 0.4, 0.3]), &fixtures::six_node_x0()).unwrap();
        assert_eq!(r.exact_average, 0.5);
        assert!(r.exact_expected_error <= 1e-12);
        assert!(r.zero_error_case);
        assert_eq!(r.bound, 0.0);
    }

    #[test]
    fn analyze_three_node() {
        let r = analyze(&fixtures::three_node(), &dist(&[0.5, 0.5]), &[1.0, 0.0, 0.0]).unwrap();
        assert!((r.exact_average - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.expected_async_average - 0.315789).abs() < 1e-6);
        assert!((r.exact_expected_error - 1.0 / 57.0).abs() < 1e-15);
        assert!((r.exact_expected_error - 0.017544).abs() < 1e-6);
        assert!((r.bound - 0.07443).abs() < 1e-5);
        assert!(!r.zero_error_case);
        assert!(r.spectral_gap > 0.0);
    }

    #[test]
    fn analyze_six_node_nonidentical() {
        let r = analyze(&fixtures::six_node_nonidentical(), &dist(&[0.5, 0.5]), &fixtures::six_node_x0()).unwrap();
        assert!((r.exact_expected_error - (24.0 / 47.0 - 0.5)).abs() < 1e-15);
        assert!((r.exact_expected_error - 0.010638).abs() < 1e-6);
        let oracle = 0.5 * 6f64.sqrt() / (47.0 / 6.0) * (30f64.sqrt() / 36.0);
        assert!((r.bound - oracle).abs() < 1e-15);
        assert!((r.bound - 0.02379).abs() < 1e-5);
        assert!(r.exact_expected_error <= r.bound);
    }

    #[test]
    fn analyze_errors() {
        let disconnected = WeightMatrix::identity(3);
        assert_eq!(analyze(&disconnected, &DelayDistribution::synchronous(), &[1.0; 3]), Err(Error::NotConnected));
        assert!(matches!(
            analyze(&fixtures::three_node(), &DelayDistribution::synchronous(), &[1.0; 2]),
            Err(Error::DimensionMismatch { .. })
        ));
        // bipartite and periodic: eigenvalue -1
        let flip = WeightMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]], None).unwrap();
        assert!(matches!(
            stationary_weights(&flip, &DelayDistribution::synchronous()),
            Err(Error::NotErgodic(_))
        ));
    }

    #[test]
    fn spectral_gap_single_node() {
        assert_eq!(spectral_gap(&DMatrix::identity(1, 1)).unwrap(), 1.0);
        let gap = spectral_gap(mean_matrix_reduced(&WeightMatrix::identity(1), &dist(&[0.5, 0.5])).matrix()).unwrap();
        assert!((gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_serialization() {
        let r = analyze(&fixtures::three_node(), &dist(&[0.5, 0.5]), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(AnalysisReport::csv_header().split(',').count(), 11);
        assert_eq!(r.csv_row().split(',').count(), 11);
        let kv = r.to_key_value();
        assert!(kv.starts_with("n = 3\nq = 2\n"));
        assert!(kv.contains("zero_error_case = false\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closed_form_is_left_eigenvector(n in 1usize..=6, q in 1usize..=4, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = metropolis_weights(&random_connected_graph(n, 0.4, &mut rng).unwrap());
            let pi = random_pi(q, &mut rng);
            let mean = mean_matrix_reduced(&a, &pi);
            prop_assert!(eigen_residual(&mean) <= 1e-10);

            let w = stationary_weights(&a, &pi).unwrap();
            let total: f64 = w.w_prime.iter().sum();
            prop_assert!((total - w.d).abs() <= 1e-12);
            prop_assert!((w.w_prime_normal.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(w.w_prime_normal.iter().all(|&x| x >= 0.0));

            let full = stationary_row_vector(&mean);
            let aggregated: Vec<f64> = (0..n).map(|i| (0..q).map(|l| full[l * n + i]).sum()).collect();
            for (x, y) in aggregated.iter().zip(&w.w_prime) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn power_iteration_agrees(n in 1usize..=5, q in 1usize..=3, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = metropolis_weights(&random_connected_graph(n, 0.4, &mut rng).unwrap());
            let pi = random_pi(q, &mut rng);
            let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let r = analyze(&a, &pi, &x0).unwrap();
            let mean = mean_matrix_reduced(&a, &pi);
            prop_assert!((power_consensus(mean.matrix(), &x0, q) - r.expected_async_average).abs() <= 1e-8);
        }

        #[test]
        fn bound_dominates_and_scales(n in 1usize..=6, q in 1usize..=4, alpha in -5.0f64..5.0, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = metropolis_weights(&random_connected_graph(n, 0.4, &mut rng).unwrap());
            let pi = random_pi(q, &mut rng);
            let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let r = analyze(&a, &pi, &x0).unwrap();
            prop_assert!(r.bound >= 0.0);
            prop_assert!(r.exact_expected_error <= r.bound + 1e-12);
            if r.zero_error_case {
                prop_assert!(r.exact_expected_error <= 1e-12);
            }
            let scaled: Vec<f64> = x0.iter().map(|x| alpha * x).collect();
            let s = analyze(&a, &pi, &scaled).unwrap();
            prop_assert!((s.exact_expected_error - alpha.abs() * r.exact_expected_error).abs() <= 1e-12);
            prop_assert!((s.bound - alpha.abs() * r.bound).abs() <= 1e-12);
        }
    }

    #[test]
    fn bound_nondecreasing_in_delay_mass() {
        let a = fixtures::six_node_nonidentical();
        let mut previous = (0.0, 0.0);
        for step in 0..=100 {
            let p2 = step as f64 / 100.0;
            let pi = dist(&[1.0 - p2, p2]);
            let c = pi.expected_delay();
            let d = 6.0 * ((1.0 + c) - c * 7.0 / 18.0);
            assert!(d > 0.0);
            let bound = error_bound(&a, &pi, 1.0);
            assert!(c / d >= previous.0 && bound >= previous.1);
            previous = (c / d, bound);
        }
    }
}
