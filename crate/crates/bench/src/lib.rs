//! Criterion benchmarks for the `pairwise-em` crate live in `benches/`.
