//! Criterion benchmarks for mzlab; see `benches/`.
