//! Criterion benchmark crate; see `benches/hot_paths.rs`.
