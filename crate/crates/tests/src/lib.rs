//! Workspace-level acceptance suite; everything lives in `tests/acceptance.rs`.
//!
//! It sits in its own package so that a failing criterion does not stop
//! `cargo test` before the per-crate suites have run.
