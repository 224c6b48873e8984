//! Undirected interaction graphs and doubly stochastic weight matrices.

use std::collections::BTreeSet;
use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Absolute tolerance on every row and column sum of a weight matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Threshold below which the centered diagonal counts as zero.
pub const ZERO_ERROR_TOL: f64 = 1e-12;

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    // normalized so that i < j
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            for endpoint in [i, j] {
                if endpoint >= n {
                    return Err(Error::EndpointOutOfRange { endpoint, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            let key = (i.min(j), i.max(j));
            if !set.insert(key) {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
        }
        Ok(Self { n, edges: set })
    }

    /// Cycle `0 - 1 - ... - (n-1) - 0`.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::GraphTooSmall { kind: "ring", min: 3, n });
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Star with node 0 at the center.
    pub fn star(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (0, i)))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| j != i && self.has_edge(i, j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn is_connected(&self) -> bool {
        let adjacency = self.adjacency_lists();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut visited = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    visited += 1;
                    queue.push_back(v);
                }
            }
        }
        visited == self.n
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(self.n, self.edges().map(|(i, j)| (perm[i], perm[j])))
    }

    fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adjacency = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        adjacency
    }
}

/// Random connected graph: a uniformly attached spanning tree plus each
/// remaining pair independently with probability `extra_edge_prob`.
pub fn random_connected_graph<R: Rng + ?Sized>(
    n: usize,
    extra_edge_prob: f64,
    rng: &mut R,
) -> Result<Graph> {
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut edges = BTreeSet::new();
    for i in 1..n {
        let parent = rng.random_range(0..i);
        edges.insert((parent, i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !edges.contains(&(i, j)) && rng.random_bool(extra_edge_prob) {
                edges.insert((i, j));
            }
        }
    }
    Graph::new(n, edges)
}

/// A validated doubly stochastic interaction matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    /// Validates row-major rows, catching ragged input before it reaches a matrix.
    pub fn from_rows(rows: &[Vec<f64>], graph: Option<&Graph>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::NotSquare { rows: n, row, cols: r.len() });
        }
        let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        validate_weight_matrix(entries, graph)
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n) }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.entries[(i, i)]).collect()
    }

    /// `A^diag`: the diagonal part of `A`.
    pub fn diag_part(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.entries.diagonal())
    }

    /// `A^off`: `A` with its diagonal zeroed.
    pub fn off_diag_part(&self) -> DMatrix<f64> {
        let mut off = self.entries.clone();
        off.fill_diagonal(0.0);
        off
    }

    /// Ordered pairs `(i, j)`, `i != j`, with `a_ij != 0`, in row-major order.
    /// These are the communication links whose delays switch.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.entries[(i, j)] != 0.0)
            .collect()
    }

    /// The graph induced by the off-diagonal zero pattern.
    pub fn graph(&self) -> Graph {
        let n = self.n();
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.entries[(i, j)] != 0.0);
        Graph::new(n, edges).expect("validated matrix has a symmetric simple pattern")
    }

    pub fn is_connected(&self) -> bool {
        self.graph().is_connected()
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let mut inverse = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let entries = DMatrix::from_fn(n, n, |i, j| self.entries[(inverse[i], inverse[j])]);
        Self { entries }
    }
}

/// Checks that `entries` is square, nonnegative, doubly stochastic within
/// [`STOCHASTIC_TOL`], and has a symmetric off-diagonal zero pattern. When a
/// graph is given the pattern must equal its edge set exactly.
pub fn validate_weight_matrix(entries: DMatrix<f64>, graph: Option<&Graph>) -> Result<WeightMatrix> {
    let n = entries.nrows();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    if entries.ncols() != n {
        return Err(Error::NotSquare { rows: n, row: 0, cols: entries.ncols() });
    }
    for i in 0..n {
        for j in 0..n {
            let a = entries[(i, j)];
            if !a.is_finite() {
                return Err(Error::NonFiniteEntry(i, j));
            }
            if a < 0.0 {
                return Err(Error::NegativeEntry(i, j));
            }
        }
    }
    for i in 0..n {
        let sum: f64 = entries.row(i).iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::RowSumViolation(i, sum));
        }
    }
    for j in 0..n {
        let sum: f64 = entries.column(j).iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::ColSumViolation(j, sum));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if (entries[(i, j)] != 0.0) != (entries[(j, i)] != 0.0) {
                return Err(Error::PatternMismatch(i, j));
            }
        }
    }
    if let Some(g) = graph {
        if g.node_count() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: g.node_count() });
        }
        for i in 0..n {
            for j in i + 1..n {
                if (entries[(i, j)] != 0.0) != g.has_edge(i, j) {
                    return Err(Error::PatternMismatch(i, j));
                }
            }
        }
    }
    Ok(WeightMatrix { entries })
}

/// Metropolis-Hastings weights: `a_ij = 1 / (1 + max(deg i, deg j))` on
/// edges, with the diagonal absorbing the remaining row mass.
pub fn metropolis_weights(graph: &Graph) -> WeightMatrix {
    let n = graph.node_count();
    let degree: Vec<usize> = (0..n).map(|i| graph.degree(i)).collect();
    let mut entries = DMatrix::zeros(n, n);
    for (i, j) in graph.edges() {
        let w = 1.0 / (1 + degree[i].max(degree[j])) as f64;
        entries[(i, j)] = w;
        entries[(j, i)] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| entries[(i, j)]).sum();
        entries[(i, i)] = 1.0 - off;
    }
    validate_weight_matrix(entries, Some(graph)).expect("metropolis weights are doubly stochastic")
}

/// Diagonal statistics entering the error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagStats {
    pub diag: Vec<f64>,
    /// `ā = (1/n) Σ a_ii`
    pub mean_diag: f64,
    /// `‖diag(A − ā I)‖₂`
    pub centered_norm: f64,
}

impl DiagStats {
    /// All diagonal entries coincide, so the expected error vanishes.
    pub fn is_uniform(&self) -> bool {
        self.centered_norm <= ZERO_ERROR_TOL
    }
}

pub fn diag_stats(a: &WeightMatrix) -> DiagStats {
    let diag = a.diag();
    let mean_diag = diag.iter().sum::<f64>() / diag.len() as f64;
    let centered_norm = diag.iter().map(|&d| (d - mean_diag).powi(2)).sum::<f64>().sqrt();
    DiagStats { diag, mean_diag, centered_norm }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn graph_rejects_bad_edges() {
        assert_eq!(Graph::new(3, [(0, 0)]), Err(Error::SelfLoop(0)));
        assert_eq!(Graph::new(3, [(0, 1), (1, 0)]), Err(Error::DuplicateEdge(0, 1)));
        assert_eq!(
            Graph::new(3, [(0, 3)]),
            Err(Error::EndpointOutOfRange { endpoint: 3, n: 3 })
        );
        assert_eq!(Graph::new(0, []), Err(Error::EmptyGraph));
    }

    #[test]
    fn connectivity() {
        assert!(Graph::ring(6).unwrap().is_connected());
        assert!(Graph::new(1, []).unwrap().is_connected());
        assert!(!Graph::new(4, [(0, 1), (2, 3)]).unwrap().is_connected());
        assert!(!WeightMatrix::identity(3).is_connected());
    }

    #[test]
    fn accepts_both_six_node_matrices() {
        let b = fixtures::six_node_nonidentical();
        assert_eq!(b.n(), 6);
        assert!(b.is_connected());
        assert_eq!(b.graph(), Graph::ring(6).unwrap());
        let c = fixtures::six_node_ring();
        assert!(c.is_connected());
    }

    #[test]
    fn identity_is_doubly_stochastic() {
        for n in 1..5 {
            let m = validate_weight_matrix(DMatrix::identity(n, n), None).unwrap();
            assert!(m.links().is_empty());
        }
    }

    #[test]
    fn rejects_row_sum_violation() {
        let err = WeightMatrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.6]], None).unwrap_err();
        match err {
            Error::RowSumViolation(0, s) => assert!((s - 0.9).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_other_violations() {
        let err = WeightMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0]], None).unwrap_err();
        assert!(matches!(err, Error::NotSquare { .. }));

        let err = WeightMatrix::from_rows(&[vec![1.5, -0.5], vec![-0.5, 1.5]], None).unwrap_err();
        assert_eq!(err, Error::NegativeEntry(0, 1));

        let err = WeightMatrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]], None).unwrap_err();
        assert!(matches!(err, Error::ColSumViolation(0, _)));

        let g = Graph::new(3, [(0, 1)]).unwrap();
        let err = WeightMatrix::from_rows(
            &[vec![0.5, 0.5, 0.0], vec![0.5, 0.25, 0.25], vec![0.0, 0.25, 0.75]],
            Some(&g),
        )
        .unwrap_err();
        assert_eq!(err, Error::PatternMismatch(1, 2));
    }

    #[test]
    fn rejects_asymmetric_pattern() {
        // doubly stochastic permutation-like mix with a one-way link
        let rows = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
        ];
        assert_eq!(WeightMatrix::from_rows(&rows, None), Err(Error::PatternMismatch(0, 1)));
    }

    #[test]
    fn metropolis_two_node_path() {
        let a = metropolis_weights(&Graph::path(2).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.get(i, j), 0.5);
            }
        }
    }

    #[test]
    fn metropolis_ring_matches_identical_diagonal_case() {
        let a = metropolis_weights(&Graph::ring(6).unwrap());
        let c = fixtures::six_node_ring();
        assert!((a.matrix() - c.matrix()).amax() < 1e-15);
    }

    #[test]
    fn metropolis_star() {
        let a = metropolis_weights(&Graph::star(3).unwrap());
        let third = 1.0 / 3.0;
        let expected = [[third, third, third], [third, 2.0 * third, 0.0], [third, 0.0, 2.0 * third]];
        for i in 0..3 {
            let row_sum: f64 = (0..3).map(|j| a.get(i, j)).sum();
            let col_sum: f64 = (0..3).map(|j| a.get(j, i)).sum();
            assert!((row_sum - 1.0).abs() < 1e-15 && (col_sum - 1.0).abs() < 1e-15);
            for j in 0..3 {
                assert!((a.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn diag_stats_identical_diagonal() {
        let s = diag_stats(&fixtures::six_node_ring());
        assert!((s.mean_diag - 1.0 / 3.0).abs() < 1e-15);
        assert!(s.centered_norm < 1e-15);
        assert!(s.is_uniform());
    }

    #[test]
    fn diag_stats_nonidentical() {
        let s = diag_stats(&fixtures::six_node_nonidentical());
        assert!((s.mean_diag - 7.0 / 18.0).abs() < 1e-15);
        // deviations from 7/18: (-1,-1,-1,1/2,2,1/2)/18
        let oracle = (3.0 + 0.25 + 4.0 + 0.25f64).sqrt() / 18.0;
        assert!((s.centered_norm - oracle).abs() < 1e-15);
        assert!((s.centered_norm - 30f64.sqrt() / 36.0).abs() < 1e-15);
        assert!((s.centered_norm - 0.152145).abs() < 1e-6);
        assert!(!s.is_uniform());
    }

    #[test]
    fn diag_stats_three_node() {
        let s = diag_stats(&fixtures::three_node());
        assert!((s.mean_diag - 7.0 / 15.0).abs() < 1e-15);
        assert!((s.centered_norm - 24f64.sqrt() / 15.0).abs() < 1e-15);
        assert!((s.centered_norm - 0.326599).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn metropolis_is_symmetric_and_doubly_stochastic(n in 1usize..=12, p in 0.0f64..1.0, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_connected_graph(n, p, &mut rng).unwrap();
            prop_assert!(g.is_connected());
            let a = metropolis_weights(&g);
            prop_assert_eq!(a.graph(), g);
            for i in 0..n {
                let row: f64 = a.matrix().row(i).sum();
                let col: f64 = a.matrix().column(i).sum();
                prop_assert!((row - 1.0).abs() <= STOCHASTIC_TOL);
                prop_assert!((col - 1.0).abs() <= STOCHASTIC_TOL);
                for j in 0..n {
                    prop_assert_eq!(a.get(i, j), a.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&a.get(i, j)));
                }
            }
        }

        #[test]
        fn diag_stats_permutation_invariant(n in 1usize..=8, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = metropolis_weights(&random_connected_graph(n, 0.4, &mut rng).unwrap());
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let b = a.permuted(&perm);
            prop_assert_eq!(b.graph(), a.graph().permuted(&perm).unwrap());
            let (sa, sb) = (diag_stats(&a), diag_stats(&b));
            prop_assert!((sa.mean_diag - sb.mean_diag).abs() <= 1e-12);
            prop_assert!((sa.centered_norm - sb.centered_norm).abs() <= 1e-12);
        }
    }
}
