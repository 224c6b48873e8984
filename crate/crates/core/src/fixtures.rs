//! Reference instances: the six-node ring experiment and a few small cases
//! with hand-checkable answers.

use crate::topology::WeightMatrix;

fn from_rationals(rows: &[&[(u32, u32)]]) -> WeightMatrix {
    let rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|&(p, q)| p as f64 / q as f64).collect())
        .collect();
    WeightMatrix::from_rows(&rows, None).expect("fixture is doubly stochastic")
}

/// Six-node ring with non-identical diagonal (1/3, 1/3, 1/3, 5/12, 1/2, 5/12).
pub fn six_node_nonidentical() -> WeightMatrix {
    const Z: (u32, u32) = (0, 1);
    const T: (u32, u32) = (1, 3);
    from_rationals(&[
        &[T, T, Z, Z, Z, T],
        &[T, T, T, Z, Z, Z],
        &[Z, T, T, T, Z, Z],
        &[Z, Z, T, (5, 12), (1, 4), Z],
        &[Z, Z, Z, (1, 4), (1, 2), (1, 4)],
        &[T, Z, Z, Z, (1, 4), (5, 12)],
    ])
}

/// Six-node ring with every nonzero weight equal to 1/3.
pub fn six_node_ring() -> WeightMatrix {
    const Z: (u32, u32) = (0, 1);
    const T: (u32, u32) = (1, 3);
    from_rationals(&[
        &[T, T, Z, Z, Z, T],
        &[T, T, T, Z, Z, Z],
        &[Z, T, T, T, Z, Z],
        &[Z, Z, T, T, T, Z],
        &[Z, Z, Z, T, T, T],
        &[T, Z, Z, Z, T, T],
    ])
}

/// Initial state of the six-node experiment; its exact average is 1/2.
pub fn six_node_x0() -> Vec<f64> {
    vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]
}

/// Three-node path `[[0.6,0.4,0],[0.4,0.2,0.4],[0,0.4,0.6]]`.
pub fn three_node() -> WeightMatrix {
    from_rationals(&[&[(3, 5), (2, 5), (0, 1)], &[(2, 5), (1, 5), (2, 5)], &[(0, 1), (2, 5), (3, 5)]])
}

/// Two fully connected nodes with all weights 1/2.
pub fn two_node() -> WeightMatrix {
    from_rationals(&[&[(1, 2), (1, 2)], &[(1, 2), (1, 2)]])
}
