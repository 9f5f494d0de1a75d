//! Determinism: re-running an experiment with an identical config and seed
//! must produce byte-identical CSV output.

use anyhow::Result;

use crate::config::ExperimentConfig;
use crate::report::{EnvStamp, RunReport};

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new(
        &cfg.experiment,
        EnvStamp { grid_h: cfg.grid_h, k_max: 0, scale_count: 0, seed: cfg.seed },
    );

    for (idx, target) in ["weight-ground-truth", "doubling", "atom-roundtrip"]
        .into_iter()
        .enumerate()
    {
        let mut sub = ExperimentConfig::default_for(target);
        sub.seed = cfg.seed;
        sub.family.cases = sub.family.cases.min(cfg.family.cases);
        if target == "weight-ground-truth" {
            sub.grid_h = 2f64.powi(-11);
        }
        let a = super::run(&sub, None)?.to_csv();
        let b = super::run(&sub, None)?.to_csv();
        let identical = a == b;
        report.push(
            format!("{}/{:03}-{target}", cfg.experiment, idx),
            format!("two runs of '{target}' with identical config and seed"),
            if identical { 0.0 } else { 1.0 },
            0.0,
            identical,
            format!("{} bytes of CSV compared", a.len()),
        );
    }
    Ok(report)
}
