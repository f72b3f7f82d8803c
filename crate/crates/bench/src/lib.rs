//! Criterion benchmarks for the calibration and prediction-set routines live in `benches/`.
