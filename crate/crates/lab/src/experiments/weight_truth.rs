//! Weight ground truth: quadrature ball measures of the inverse-square-root
//! weight against the antiderivative closed form, and the A_1 estimate of
//! constant weights against 1.

use anyhow::Result;

use hardy_core::weights::{
    ball_family, estimate_a1_constant, measure_ball_quadrature, weight_report,
};
use hardy_core::{Ball, GridSpec, Weight};

use crate::config::ExperimentConfig;
use crate::report::{EnvStamp, RunReport};

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let h = cfg.grid_h;
    let mut report = RunReport::new(
        &cfg.experiment,
        EnvStamp { grid_h: h, k_max: 0, scale_count: 0, seed: cfg.seed },
    );

    let spec = GridSpec::new(1, [-8.0, 0.0], [8.0, 0.0], h)?;
    let w = Weight::power(1, -0.5)?;
    for (i, r) in [0.25, 1.0, 4.0].into_iter().enumerate() {
        let ball = Ball::new([0.0, 0.0], r)?;
        let quad = measure_ball_quadrature(&w, &ball, &spec)?;
        let oracle = 4.0 * r.sqrt();
        let rel = ((quad - oracle) / oracle).abs();
        report.push(
            format!("{}/{:03}-measure-r{}", cfg.experiment, i, r),
            format!("w=|x|^-1/2 ball radius {r} vs antiderivative closed form"),
            rel,
            1e-2,
            rel <= 1e-2,
            format!("quadrature {quad}, closed form {oracle}"),
        );
    }

    let coarse = GridSpec::new(1, [-4.0, 0.0], [4.0, 0.0], 1.0 / 128.0)?;
    let balls = ball_family(1, -2.0, 2.0, 9, 0.05, 1.5, 7, 40, cfg.seed);
    for (i, c) in [1.0, 5.0].into_iter().enumerate() {
        let w = Weight::constant(c)?;
        let est = estimate_a1_constant(&w, &balls, &coarse)?;
        let dev = (est - 1.0).abs();
        report.push(
            format!("{}/{:03}-a1-constant-{c}", cfg.experiment, 3 + i),
            format!("A_1 estimate for w={c}"),
            dev,
            1e-9,
            dev <= 1e-9,
            format!("estimate {est}"),
        );
    }

    // full characteristic record for the configured weight
    let w = cfg.weight.build(1)?;
    let ci_grid = GridSpec::new(1, [-4.0, 0.0], [4.0, 0.0], 1.0 / 1024.0)?;
    let wr = weight_report(
        &w,
        &ci_grid,
        &balls,
        &[2.0, 3.0],
        &Ball::new([0.125, 0.0], 0.125)?,
        4,
    )?;
    report.artifacts.push((
        "weight-report".into(),
        serde_json::json!({
            "weight": cfg.weight.describe(),
            "a1_constant_est": wr.a1_constant_est,
            "aq_constant_est": wr.aq_constant_est,
            "critical_index_est": wr.critical_index_est,
            "doubling_exponents": wr.doubling_exponents,
        }),
    ));
    report.stat("critical_index_lo", wr.critical_index_est.0);
    report.stat("critical_index_hi", wr.critical_index_est.1);
    Ok(report)
}
