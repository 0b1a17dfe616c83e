//! Experiment harness around `qem-core`: reproducible benchmark drivers,
//! a QAOA circuit builder for multi-user detection instances, and CSV /
//! manifest output for every run.

pub mod config;
pub mod engine;
pub mod experiments;
pub mod mud;
pub mod output;
pub mod qaoa;
