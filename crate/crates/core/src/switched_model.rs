//! Augmented switched linear system for bounded-delay asynchronous averaging.
//!
//! The augmented state stacks the last `q` iterates,
//! `y(k) = [x(k); x(k-1); ...; x(k-q+1)]`, and evolves as
//! `y(k+1) = W_σ y(k)`. Each modal matrix `W_σ` has a top block row
//! `[W_11 ... W_1q]` that splits `A` according to which stale copy of each
//! neighbor is read, followed by identity blocks that shift the history.
//!
//! Delay indices are 1-based throughout: `l = 1` reads the current value,
//! `l = d + 1` reads a value `d` steps old.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::topology::WeightMatrix;

/// Largest number of modes [`enumerate_modes`] will produce.
pub const ENUMERATION_CAP: usize = 1 << 20;

const PROBABILITY_TOL: f64 = 1e-12;

/// I.i.d. per-link delay law `π` over delays `0..q`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDistribution {
    pi: Vec<f64>,
}

impl DelayDistribution {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if let Some((j, &p)) = pi.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidProbability(j, p));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::ProbabilitySum(sum));
        }
        Ok(Self { pi })
    }

    /// No delay ever: `q = 1`, `π = [1]`.
    pub fn synchronous() -> Self {
        Self { pi: vec![1.0] }
    }

    /// Memory depth: delays range over `0..q` steps.
    pub fn q(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Probability of delay index `l` (1-based).
    pub fn prob(&self, l: usize) -> f64 {
        self.pi[l - 1]
    }

    /// Expected delay in steps, `c = Σ_{j≥2} (j−1) π_j`.
    pub fn expected_delay(&self) -> f64 {
        self.pi.iter().enumerate().skip(1).map(|(d, p)| d as f64 * p).sum()
    }
}

/// Delay index per communication link for one switching mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModeAssignment {
    delays: BTreeMap<(usize, usize), usize>,
}

impl ModeAssignment {
    pub fn new(delays: BTreeMap<(usize, usize), usize>) -> Self {
        Self { delays }
    }

    pub(crate) fn from_parts(links: &[(usize, usize)], delays: &[usize]) -> Self {
        Self { delays: links.iter().copied().zip(delays.iter().copied()).collect() }
    }

    /// Every link reads the current value.
    pub fn synchronous(a: &WeightMatrix) -> Self {
        Self { delays: a.links().into_iter().map(|link| (link, 1)).collect() }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<usize> {
        self.delays.get(&(i, j)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.delays.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// One realization `W_σ`, stored as its top block row.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalMatrix {
    n: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl ModalMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.n * self.q()
    }

    /// Top-row block `W_1l`, `l` in `1..=q`.
    pub fn block(&self, l: usize) -> &DMatrix<f64> {
        &self.blocks[l - 1]
    }

    /// The full `nq × nq` matrix.
    pub fn assemble(&self) -> DMatrix<f64> {
        assemble_augmented(self.n, &self.blocks)
    }
}

/// Places `blocks` along the top block row and identity shift blocks one
/// block-row below the diagonal.
fn assemble_augmented(n: usize, blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let q = blocks.len();
    let mut w = DMatrix::zeros(n * q, n * q);
    for (l, block) in blocks.iter().enumerate() {
        w.view_mut((0, l * n), (n, n)).copy_from(block);
    }
    for r in n..n * q {
        w[(r, r - n)] = 1.0;
    }
    w
}

fn modal_blocks(a: &WeightMatrix, links: &[(usize, usize)], delays: &[usize], q: usize) -> Vec<DMatrix<f64>> {
    let n = a.n();
    let mut blocks = vec![DMatrix::zeros(n, n); q];
    for i in 0..n {
        blocks[0][(i, i)] = a.get(i, i);
    }
    for (&(i, j), &l) in links.iter().zip(delays) {
        blocks[l - 1][(i, j)] = a.get(i, j);
    }
    blocks
}

pub fn build_modal_matrix(a: &WeightMatrix, assignment: &ModeAssignment, q: usize) -> Result<ModalMatrix> {
    if q == 0 {
        return Err(Error::InvalidDepth);
    }
    let links = a.links();
    for &(i, j) in &links {
        if assignment.get(i, j).is_none() {
            return Err(Error::AssignmentPatternMismatch(i, j));
        }
    }
    if assignment.len() != links.len() {
        let (i, j) = assignment
            .iter()
            .map(|(link, _)| link)
            .find(|link| !links.contains(link))
            .expect("extra key exists when lengths differ");
        return Err(Error::AssignmentPatternMismatch(i, j));
    }
    let mut delays = Vec::with_capacity(links.len());
    for (_, l) in assignment.iter() {
        if l == 0 || l > q {
            return Err(Error::DelayOutOfRange { l, q });
        }
        delays.push(l);
    }
    Ok(ModalMatrix { n: a.n(), blocks: modal_blocks(a, &links, &delays, q) })
}

/// `q^m` where `m` is the number of links, or `None` past [`ENUMERATION_CAP`].
fn capped_mode_count(q: usize, m: usize) -> Option<usize> {
    u32::try_from(m)
        .ok()
        .and_then(|m| q.checked_pow(m))
        .filter(|&count| count <= ENUMERATION_CAP)
}

/// Number of distinct modes over the nonzero links, `q^m`.
pub fn effective_mode_count(a: &WeightMatrix, q: usize) -> Option<u128> {
    u32::try_from(a.links().len()).ok().and_then(|m| (q as u128).checked_pow(m))
}

/// Formal mode count `η = q^{n(n−1)}` over all ordered pairs.
pub fn formal_mode_count(n: usize, q: usize) -> Option<u128> {
    u32::try_from(n * n.saturating_sub(1)).ok().and_then(|e| (q as u128).checked_pow(e))
}

/// Lexicographic odometer over delay vectors in `{1..=q}^m`.
struct DelayOdometer {
    q: usize,
    current: Option<Vec<usize>>,
}

impl DelayOdometer {
    fn new(m: usize, q: usize) -> Self {
        Self { q, current: Some(vec![1; m]) }
    }
}

impl Iterator for DelayOdometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        for digit in next.iter_mut().rev() {
            if *digit < self.q {
                *digit += 1;
                self.current = Some(next);
                return Some(out);
            }
            *digit = 1;
        }
        Some(out)
    }
}

/// All `q^m` delay assignments over the nonzero links of `A`, in
/// lexicographic order of the delay vector (links in row-major order).
pub fn enumerate_modes(a: &WeightMatrix, q: usize) -> Result<Vec<ModeAssignment>> {
    if q == 0 {
        return Err(Error::InvalidDepth);
    }
    let links = a.links();
    let m = links.len();
    capped_mode_count(q, m).ok_or(Error::EnumerationTooLarge { q, m, cap: ENUMERATION_CAP })?;
    Ok(DelayOdometer::new(m, q).map(|d| ModeAssignment::from_parts(&links, &d)).collect())
}

/// `ν_σ = Π_links π_{l(i,j)}`.
pub fn mode_probability(assignment: &ModeAssignment, delays: &DelayDistribution) -> f64 {
    assignment.iter().map(|(_, l)| delays.prob(l)).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    Enumerated,
    Reduced,
}

impl Construction {
    pub fn as_str(self) -> &'static str {
        match self {
            Construction::Enumerated => "enumerated",
            Construction::Reduced => "reduced",
        }
    }
}

/// The expected modal matrix `W̄ = E[W_σ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrix {
    n: usize,
    q: usize,
    matrix: DMatrix<f64>,
    method: Construction,
}

impl MeanMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.n * self.q
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn method(&self) -> Construction {
        self.method
    }

    /// Top-row block `W̄_1l`, `l` in `1..=q`.
    pub fn block(&self, l: usize) -> DMatrix<f64> {
        self.matrix.view((0, (l - 1) * self.n), (self.n, self.n)).into_owned()
    }

    /// Largest entrywise difference against another mean matrix.
    pub fn max_abs_diff(&self, other: &MeanMatrix) -> f64 {
        assert_eq!(self.matrix.shape(), other.matrix.shape(), "mean matrices differ in shape");
        (&self.matrix - &other.matrix).amax()
    }

    /// Largest deviation of a row sum from one.
    pub fn row_sum_deviation(&self) -> f64 {
        self.matrix.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn check_depth(delays: &DelayDistribution) -> Result<usize> {
    match delays.q() {
        0 => Err(Error::InvalidDepth),
        q => Ok(q),
    }
}

/// `W̄ = Σ_σ ν_σ W_σ` by brute force over every mode.
pub fn mean_matrix_enumerated(a: &WeightMatrix, delays: &DelayDistribution) -> Result<MeanMatrix> {
    let q = check_depth(delays)?;
    let n = a.n();
    let links = a.links();
    let m = links.len();
    capped_mode_count(q, m).ok_or(Error::EnumerationTooLarge { q, m, cap: ENUMERATION_CAP })?;

    let dim = n * q;
    // column-major accumulators over the assembled nq x nq matrix; each mode
    // contributes its nonzero entries: A's diagonal, one entry per link in the
    // block column of its delay, and the history shift
    let mut acc = vec![CompensatedSum::default(); dim * dim];
    let at = |row: usize, col: usize| col * dim + row;
    for mode in DelayOdometer::new(m, q) {
        let nu: f64 = mode.iter().map(|&l| delays.prob(l)).product();
        if nu == 0.0 {
            continue;
        }
        for i in 0..n {
            acc[at(i, i)].add(nu * a.get(i, i));
        }
        for (&(i, j), &l) in links.iter().zip(&mode) {
            acc[at(i, (l - 1) * n + j)].add(nu * a.get(i, j));
        }
        for r in n..dim {
            acc[at(r, r - n)].add(nu);
        }
    }
    let matrix = DMatrix::from_iterator(dim, dim, acc.iter().map(CompensatedSum::value));
    Ok(MeanMatrix { n, q, matrix, method: Construction::Enumerated })
}

/// `W̄ = W^diag + Σ_j π_j W_j^off`: `A^diag` in the leading block, the
/// history shift below it, and `π_j A^off` placed in block column `j`.
/// Cost is linear in `q` apart from zero-filling the dense result.
pub fn mean_matrix_reduced(a: &WeightMatrix, delays: &DelayDistribution) -> MeanMatrix {
    let q = delays.q();
    assert!(q >= 1, "delay distribution is never empty");
    let n = a.n();
    let dim = n * q;
    let mut matrix = DMatrix::zeros(dim, dim);
    for i in 0..n {
        matrix[(i, i)] = a.get(i, i);
    }
    for r in n..dim {
        matrix[(r, r - n)] = 1.0;
    }
    for (l, &p) in delays.pi().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                matrix[(i, l * n + j)] += p * a.get(i, j);
            }
        }
    }
    MeanMatrix { n, q, matrix, method: Construction::Reduced }
}
