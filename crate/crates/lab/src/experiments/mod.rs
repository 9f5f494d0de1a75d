//! Experiment suites binding the numerical kernels into theorem-level
//! verification runs. Every case derives its own seed from the config seed
//! and case index, so any row is reproducible in isolation via `--only`.

use anyhow::{bail, Result};

use crate::config::ExperimentConfig;
use crate::report::RunReport;

mod atom_roundtrip;
mod atom_uniformity;
mod atomic_sum;
mod decomposition;
mod determinism;
mod doubling;
mod kernel;
mod operator;
mod weight_truth;

pub use decomposition::decomposition_bundle;

pub const EXPERIMENTS: &[&str] = &[
    "weight-ground-truth",
    "doubling",
    "atom-roundtrip",
    "atom-norm-uniformity",
    "atomic-sum-bound",
    "molecule-decomposition",
    "kernel-conditions",
    "operator-pipeline",
    "determinism",
];

pub fn run(cfg: &ExperimentConfig, only: Option<&str>) -> Result<RunReport> {
    let mut report = match cfg.experiment.as_str() {
        "weight-ground-truth" => weight_truth::run(cfg)?,
        "doubling" => doubling::run(cfg)?,
        "atom-roundtrip" => atom_roundtrip::run(cfg)?,
        "atom-norm-uniformity" => atom_uniformity::run(cfg)?,
        "atomic-sum-bound" => atomic_sum::run(cfg)?,
        "molecule-decomposition" => decomposition::run(cfg)?,
        "kernel-conditions" => kernel::run(cfg)?,
        "operator-pipeline" => operator::run(cfg)?,
        "determinism" => determinism::run(cfg)?,
        other => bail!(
            "unknown experiment '{other}'; available: {}",
            EXPERIMENTS.join(", ")
        ),
    };
    if let Some(id) = only {
        report.retain_only(id);
        if report.rows.is_empty() {
            bail!("no row with id '{id}'");
        }
    }
    Ok(report)
}

/// Snap a coordinate to the grid lattice so weight singularities stay on
/// cell edges.
pub(crate) fn snap(x: f64, h: f64) -> f64 {
    (x / h).round() * h
}

/// Log-spaced ladder between two positive endpoints.
pub(crate) fn log_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            if count <= 1 {
                lo
            } else {
                lo * (hi / lo).powf(i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}
