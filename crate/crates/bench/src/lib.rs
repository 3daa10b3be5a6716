//! Benchmarks and pilot scripts live in `benches/` and `src/bin/`.
