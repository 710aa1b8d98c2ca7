//! Experiment orchestration for the chaoslab library: config ingestion,
//! N-sweep scheduling, deterministic seeding, report emission, and the
//! acceptance suite behind the `chaoslab` binary.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod manifest;
pub mod report;
