//! Benchmark suites: dataset generators, metrics, and experiment drivers.

pub mod datasets;
pub mod drivers;
pub mod metrics;
pub mod report;
