//! Criterion benchmarks for `sepccm-core` live under `benches/`.
