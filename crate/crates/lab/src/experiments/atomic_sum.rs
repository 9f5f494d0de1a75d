//! Finite atomic sums: for f = sum lambda_i a_i of generated approximate
//! atoms, the quasi-norm is controlled by the coefficient p-sum times the
//! run's uniform atom bound (the computable direction of the atomic-space
//! equivalence; the reverse inclusion needs an existence theorem and is
//! recorded as not desk-verifiable).

use anyhow::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hardy_core::atoms::{make_approx_atom, make_atom, AtomCandidate};
use hardy_core::{
    atomic_norm_upper, hp_norm, Ball, GridFunction, GridSpec, HardyParams, Mollifier, Qexp,
    ScaleGrid,
};

use crate::config::ExperimentConfig;
use crate::experiments::snap;
use crate::report::{EnvStamp, RunReport};

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let h = cfg.grid_h;
    let scales = ScaleGrid::dyadic(h);
    let phi = Mollifier::gaussian(1);
    let mut report = RunReport::new(
        &cfg.experiment,
        EnvStamp { grid_h: h, k_max: 0, scale_count: scales.scales.len(), seed: cfg.seed },
    );
    let omega = cfg.weight.build(1)?;
    let spec = GridSpec::new(1, [-8.0, 0.0], [8.0, 0.0], h)?;

    for (case, (p, lambda, m)) in [
        (1.0, 3.0, 1usize),
        (1.0, 3.0, 5),
        (1.0, 3.0, 20),
        (2.0 / 3.0, 4.0, 5),
        (2.0 / 3.0, 4.0, 20),
    ]
    .into_iter()
    .enumerate()
    {
        let seed = cfg.case_seed(case);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = HardyParams::new(1, p, Qexp::Finite(2.0), 1.0, lambda, 1.0, 1.0, 1.0)?;
        let mut atoms: Vec<AtomCandidate> = Vec::with_capacity(m);
        let mut lambdas = Vec::with_capacity(m);
        for i in 0..m {
            let r = rng.gen_range(cfg.family.r_lo..cfg.family.r_hi);
            let c = snap(rng.gen_range(-2.0..2.0), h);
            let ball = Ball::new([c, 0.0], r)?;
            let a = if r < 1.0 {
                make_approx_atom(&spec, &ball, &params, &omega, seed ^ (i as u64), 0.4)?.candidate
            } else {
                make_atom(&spec, &ball, &params, &omega, seed ^ (i as u64))?
            };
            atoms.push(a);
            lambdas.push(rng.gen_range(-2.0..2.0));
        }
        // assemble the sum and the enclosing ball
        let mut values = vec![0.0f64; spec.len()];
        let mut reach = 0.0f64;
        for (a, l) in atoms.iter().zip(&lambdas) {
            for (v, av) in values.iter_mut().zip(&a.f.values) {
                *v += l * av;
            }
            reach = reach.max(a.ball.center[0].abs() + a.ball.radius);
        }
        let hull = Ball::new([0.0, 0.0], reach.max(0.25))?;
        let f = GridFunction::new(spec, values, Some(hull.inflate(2.0 * h)))?;

        let atom_norms: Vec<f64> = atoms
            .iter()
            .map(|a| Ok(hp_norm(&a.f, &omega, p, &phi, &scales, &a.ball)?.value))
            .collect::<Result<_>>()?;
        let c_run = atom_norms.iter().cloned().fold(0.0f64, f64::max);
        let direct = hp_norm(&f, &omega, p, &phi, &scales, &hull)?.value;
        let bound = c_run * atomic_norm_upper(&lambdas, p);
        report.push(
            format!("{}/{:03}-sum", cfg.experiment, case),
            format!("p={p:.3} m={m} coefficient-controlled quasi-norm"),
            direct,
            bound * (1.0 + 1e-9),
            direct <= bound * (1.0 + 1e-9),
            format!("uniform atom bound {c_run}; reverse inclusion not desk-verifiable"),
        );

        // homogeneity of both sides under coefficient scaling (p = 1)
        if p == 1.0 && m == 5 {
            let scaled = f.scaled(3.0)?;
            let direct3 = hp_norm(&scaled, &omega, p, &phi, &scales, &hull)?.value;
            let dev = (direct3 - 3.0 * direct).abs() / (3.0 * direct);
            report.push(
                format!("{}/{:03}-homogeneity", cfg.experiment, 100 + case),
                "coefficients scaled by 3 scale both sides by 3".to_string(),
                dev,
                1e-9,
                dev <= 1e-9,
                "",
            );
        }
    }
    Ok(report)
}
