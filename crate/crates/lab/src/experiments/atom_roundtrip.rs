//! Generator/validator round trip: every generated atom passes the atom
//! validator and the approximate-atom validator (the inclusion of classical
//! atoms among approximate ones); every generated approximate atom with a
//! positive moment fill passes its validator and fails the vanishing-moment
//! check.

use anyhow::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hardy_core::atoms::{
    make_approx_atom, make_atom, validate_approx_atom, validate_atom, Condition,
};
use hardy_core::{Ball, GridSpec, HardyParams, Qexp, Weight};

use crate::config::ExperimentConfig;
use crate::experiments::snap;
use crate::report::{EnvStamp, RunReport};

fn case_params(case: usize) -> (f64, f64) {
    // alternate p over {1, 2/3} and lambda far enough above n(q/p - 1)
    if case.is_multiple_of(2) {
        (1.0, 3.0)
    } else {
        (2.0 / 3.0, 4.0)
    }
}

fn case_weight(case: usize) -> Result<Weight> {
    Ok(if (case / 2).is_multiple_of(2) {
        Weight::constant(1.0)?
    } else {
        Weight::power(1, -0.5)?
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new(
        &cfg.experiment,
        EnvStamp { grid_h: cfg.grid_h, k_max: 0, scale_count: 0, seed: cfg.seed },
    );
    let n_cases = cfg.family.cases;

    for case in 0..n_cases {
        let seed = cfg.case_seed(case);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, lambda) = case_params(case);
        let omega = case_weight(case)?;
        let params = HardyParams::new(1, p, Qexp::Finite(2.0), 1.0, lambda, 1.0, 1.0, 1.0)?;
        let r = cfg.family.r_lo
            * (cfg.family.r_hi / cfg.family.r_lo).powf(case as f64 / (n_cases - 1) as f64);
        let h = (r / 64.0).min(cfg.grid_h);
        let center = snap(rng.gen_range(-0.5..0.5), h);
        let ball = Ball::new([center, 0.0], r)?;
        let spec = GridSpec::centered_1d(center, 2.0 * r, h)?;

        // classical atom: validator round trip and the inclusion
        let atom = make_atom(&spec, &ball, &params, &omega, seed)?;
        let atom_rep = validate_atom(&atom)?;
        let incl_rep = validate_approx_atom(&atom, cfg.budgets.c_control)?;
        report.push(
            format!("{}/{:03}-atom", cfg.experiment, case),
            format!("atom p={p} r={r:.4} {}", case_label(&omega)),
            atom_rep.min_passing_constant(Condition::Size),
            1.0,
            atom_rep.pass() && incl_rep.pass(),
            "atom validator and approximate-atom inclusion",
        );

        // approximate atom (r < 1 only; above 1 any atom qualifies)
        if r < 1.0 {
            let fill = 0.3 + 0.6 * rng.gen_range(0.0..1.0);
            let approx = make_approx_atom(&spec, &ball, &params, &omega, seed ^ 0xa5a5, fill)?;
            let ok_approx = validate_approx_atom(&approx.candidate, cfg.budgets.c_control)?;
            let atom_check = validate_atom(&approx.candidate)?;
            let moment_fails = !atom_check
                .row(Condition::VanishingMoments)
                .map(|r| r.pass)
                .unwrap_or(true);
            report.push(
                format!("{}/{:03}-approx", cfg.experiment, case),
                format!(
                    "approximate atom p={p} r={r:.4} fill={:.3} {}",
                    approx.achieved_fill,
                    case_label(&omega)
                ),
                ok_approx.min_passing_constant(Condition::MomentControl),
                cfg.budgets.c_control,
                ok_approx.pass() && moment_fails && approx.achieved_fill > 0.0,
                "ball-control validator passes; vanishing-moment check fails",
            );
        }
    }
    Ok(report)
}

fn case_label(w: &Weight) -> String {
    if w.singular_points().is_empty() {
        "w=1".into()
    } else {
        "w=|x|^-1/2".into()
    }
}
