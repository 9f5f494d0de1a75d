//! Experiment runner, run configuration and file formats for the weighted
//! local Hardy space laboratory. The binary target wires these into the
//! `hardy-lab` command-line tool; the library surface exists so integration
//! tests can drive experiments directly.

pub mod config;
pub mod experiments;
pub mod gridio;
pub mod report;
