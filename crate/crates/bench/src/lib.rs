//! Criterion benchmarks for the optimiser live in `benches/`.
