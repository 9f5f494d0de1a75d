//! Quasi-norm uniformity over approximate atoms: across radii spanning both
//! the small-ball and large-ball regimes, h^p_w quasi-norms stay finite with
//! no trend in the radius, bounded max/median spread, and refinement
//! stability under h -> h/2.

use anyhow::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hardy_core::atoms::{make_approx_atom, make_atom, AtomCandidate};
use hardy_core::{hp_norm, Ball, GridSpec, HardyParams, Mollifier, Qexp, ScaleGrid, Weight};

use crate::config::ExperimentConfig;
use crate::experiments::{log_ladder, snap};
use crate::report::{median, regression_slope, EnvStamp, RunReport};

struct GroupKey {
    p: f64,
    lambda: f64,
    weight_label: &'static str,
}

const GROUPS: &[GroupKey] = &[
    GroupKey { p: 0.5, lambda: 5.0, weight_label: "w=1" },
    GroupKey { p: 2.0 / 3.0, lambda: 4.0, weight_label: "w=1" },
    GroupKey { p: 1.0, lambda: 3.0, weight_label: "w=1" },
    GroupKey { p: 0.5, lambda: 5.0, weight_label: "w=|x|^-1/2" },
    GroupKey { p: 2.0 / 3.0, lambda: 4.0, weight_label: "w=|x|^-1/2" },
    GroupKey { p: 1.0, lambda: 3.0, weight_label: "w=|x|^-1/2" },
];

fn build_weight(label: &str) -> Result<Weight> {
    Ok(match label {
        "w=1" => Weight::constant(1.0)?,
        _ => Weight::power(1, -0.5)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn atom_for(
    _cfg: &ExperimentConfig,
    params: &HardyParams,
    omega: &Weight,
    center: f64,
    r: f64,
    h: f64,
    seed: u64,
    moment_fill: f64,
) -> Result<AtomCandidate> {
    let phi_reach = 7.0;
    let ball = Ball::new([center, 0.0], r)?;
    let spec = GridSpec::centered_1d(center, 8.0 * r + phi_reach + 1.0, h)?;
    Ok(if r < 1.0 && moment_fill > 0.0 {
        make_approx_atom(&spec, &ball, params, omega, seed, moment_fill)?.candidate
    } else {
        make_atom(&spec, &ball, params, omega, seed)?
    })
}

fn measure(c: &AtomCandidate, p: f64) -> Result<f64> {
    let h = c.f.spec.h;
    let phi = Mollifier::gaussian(1);
    let scales = ScaleGrid::dyadic(h);
    Ok(hp_norm(&c.f, &c.omega, p, &phi, &scales, &c.ball)?.value)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let h = cfg.grid_h;
    let mut report = RunReport::new(
        &cfg.experiment,
        EnvStamp {
            grid_h: h,
            k_max: 0,
            scale_count: ScaleGrid::dyadic(h).scales.len(),
            seed: cfg.seed,
        },
    );
    let radii = log_ladder(cfg.family.r_lo, cfg.family.r_hi, cfg.family.cases.div_ceil(GROUPS.len()));

    let mut all_norms: Vec<f64> = Vec::new();
    let mut classical_max = 0.0f64;
    let mut case_idx = 0usize;

    for (g_idx, group) in GROUPS.iter().enumerate() {
        let omega = build_weight(group.weight_label)?;
        let params = HardyParams::new(
            1,
            group.p,
            Qexp::Finite(2.0),
            1.0,
            group.lambda,
            1.0,
            1.0,
            1.0,
        )?;
        let mut log_points: Vec<(f64, f64)> = Vec::new();
        for &r in &radii {
            let seed = cfg.case_seed(case_idx);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0_ff_ee);
            let center = snap(rng.gen_range(-0.5..0.5), h);
            let base = atom_for(cfg, &params, &omega, center, r, h, seed, cfg.family.moment_fill)?;
            let fine = atom_for(
                cfg,
                &params,
                &omega,
                center,
                r,
                h / 2.0,
                seed,
                cfg.family.moment_fill,
            )?;
            let n_base = measure(&base, group.p)?;
            let n_fine = measure(&fine, group.p)?;
            let stable = (n_fine - n_base).abs() / n_base;
            report.push(
                format!("{}/{:03}-norm", cfg.experiment, case_idx),
                format!("p={:.3} {} r={r:.4}", group.p, group.weight_label),
                stable,
                0.25,
                n_base.is_finite() && n_base > 0.0 && stable <= 0.25,
                format!("norm {n_base} (h), {n_fine} (h/2)"),
            );
            all_norms.push(n_base);
            log_points.push((r.ln(), n_base.ln()));

            // classical subfamily: the same draw without the moment fill
            if r < 1.0 && case_idx.is_multiple_of(3) {
                let classical = atom_for(cfg, &params, &omega, center, r, h, seed, 0.0)?;
                classical_max = classical_max.max(measure(&classical, group.p)?);
            }
            case_idx += 1;
        }
        let slope = regression_slope(&log_points);
        report.push(
            format!("{}/{:03}-slope", cfg.experiment, 900 + g_idx),
            format!(
                "log-norm vs log-r slope, p={:.3} {}",
                group.p, group.weight_label
            ),
            slope.abs(),
            0.3,
            slope.abs() <= 0.3,
            "uniformity of the quasi-norm in the radius",
        );
        report.stat(format!("slope[p={:.3},{}]", group.p, group.weight_label), slope);
    }

    let max = all_norms.iter().cloned().fold(0.0f64, f64::max);
    let med = median(&mut all_norms.clone());
    report.push(
        format!("{}/990-spread", cfg.experiment),
        "max/median of the quasi-norms across the family".to_string(),
        max / med,
        10.0,
        max / med <= 10.0,
        format!("max {max}, median {med}"),
    );
    report.push(
        format!("{}/991-classical-subfamily", cfg.experiment),
        "classical atoms stay within the approximate-family spread".to_string(),
        classical_max,
        max * 1.10,
        classical_max <= max * 1.10,
        "vanishing-moment subfamily maximum against the family maximum",
    );
    report.stat("norm_max", max);
    report.stat("norm_median", med);
    Ok(report)
}
