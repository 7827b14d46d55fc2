//! Criterion benchmarks for the posekit pipeline stages live in `benches/`.
