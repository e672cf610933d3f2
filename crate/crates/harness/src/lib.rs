//! Benchmark harness: configuration, target-system datasets, the cell
//! runner, scoring, radar plots, markdown reports, and the results store.

pub mod config;
pub mod dataset;
pub mod plot;
pub mod report;
pub mod runner;
pub mod score;
pub mod store;
