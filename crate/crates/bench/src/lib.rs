//! Criterion benchmarks for mean-matrix construction and ensemble simulation.
//! See `benches/`.
