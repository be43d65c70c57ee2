//! Criterion benchmarks for the reconstruction pipeline; see `benches/`.
