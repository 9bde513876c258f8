//! Criterion benchmarks for the controllers; see `benches/`.
