//! Configuration, synthetic data and pipeline orchestration.

pub mod config;
pub mod io;
pub mod outputs;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use config::ScenarioConfig;
pub use pipeline::{Pipeline, RunManifest, Stage};
