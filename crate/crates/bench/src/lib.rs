//! Criterion benchmarks for `fshift-core`; see `benches/`.
