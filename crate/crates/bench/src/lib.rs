//! Criterion benchmarks for geodeph kernels live in `benches/`.
