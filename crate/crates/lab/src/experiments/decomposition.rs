//! Decomposition fidelity and the dual-path quasi-norm bound: seeded
//! molecules are decomposed into shell atoms plus corrections plus a
//! residual; reconstruction must be faithful, every emitted piece must
//! validate, the coefficient sums must match their geometric closed forms,
//! and the direct quasi-norm of the molecule must be controlled by the
//! decomposition-side bound.

use anyhow::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hardy_core::atoms::{
    make_molecule, validate_approx_atom, validate_atom, AtomCandidate, Condition,
};
use hardy_core::decompose::{decompose_molecule, reconstruct, Decomposition};
use hardy_core::{
    box_coarsen, hp_norm, Ball, GridSpec, Mollifier, ScaleGrid, Weight,
};

use crate::config::ExperimentConfig;
use crate::report::{EnvStamp, RunReport};

/// Build the case molecule and its decomposition.
pub fn decomposition_bundle(
    cfg: &ExperimentConfig,
    case: usize,
    k_max: u32,
    h: f64,
) -> Result<(AtomCandidate, Decomposition)> {
    let seed = cfg.case_seed(case);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0d_ec_af);
    let params = cfg.params.build(cfg.dim)?;
    let omega = cfg.weight.build(cfg.dim)?;
    // radius snapped to the lattice so the truncation ball is box-exact
    let cells = rng.gen_range((cfg.family.r_lo / h) as u64..(cfg.family.r_hi / h) as u64);
    let r = cells as f64 * h;
    let ball = Ball::new([0.0, 0.0], r)?;
    let half = r * 2f64.powi(k_max as i32);
    let spec = GridSpec::new(1, [-half, 0.0], [half, 0.0], h)?;
    let tail_fill = 0.3 + 0.4 * rng.gen_range(0.0..1.0);
    let molecule = make_molecule(&spec, &ball, &params, &omega, seed, tail_fill)?;
    let decomposition = decompose_molecule(&molecule, k_max, cfg.budgets.c_control)?;
    Ok((molecule, decomposition))
}

/// Scale-matched coarsening for norm measurement of a shell-k piece.
fn norm_factor(k: u32) -> usize {
    1usize << (k.saturating_sub(3)).min(8)
}

fn piece_norm(c: &AtomCandidate, p: f64, omega: &Weight, factor: usize) -> Result<f64> {
    let g = box_coarsen(&c.f, factor)?;
    let phi = Mollifier::gaussian(1);
    let scales = ScaleGrid::dyadic(g.spec.h);
    Ok(hp_norm(&g, omega, p, &phi, &scales, &c.ball)?.value)
}

/// The decomposition-side quasi-norm bound
/// `(sum |t_k|^p n(a_k)^p + sum |s_k|^p n(b_k)^p + n(residual)^p)^{1/p}`.
pub fn decomposition_side_bound(d: &Decomposition) -> Result<f64> {
    let p = d.params.p;
    let mut acc = 0.0f64;
    for atom in &d.atoms {
        if atom.coeff == 0.0 {
            continue;
        }
        let n = piece_norm(&atom.candidate, p, &d.omega, norm_factor(atom.k))?;
        acc += atom.coeff.powf(p) * n.powf(p);
    }
    for sup in &d.sup_atoms {
        if sup.coeff == 0.0 {
            continue;
        }
        let n = piece_norm(&sup.candidate, p, &d.omega, norm_factor(sup.k + 1))?;
        acc += sup.coeff.powf(p) * n.powf(p);
    }
    acc += piece_norm(&d.residual, p, &d.omega, 1)?.powf(p);
    Ok(acc.powf(1.0 / p))
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let h = cfg.grid_h;
    let k_max = cfg.family.k_max;
    let mut report = RunReport::new(
        &cfg.experiment,
        EnvStamp {
            grid_h: h,
            k_max,
            scale_count: ScaleGrid::dyadic(h).scales.len(),
            seed: cfg.seed,
        },
    );
    let phi = Mollifier::gaussian(1);
    let mut c_t_max = 0.0f64;

    for case in 0..cfg.family.cases {
        let (molecule, d) = decomposition_bundle(cfg, case, k_max, h)?;
        c_t_max = c_t_max.max(d.c_t);
        let label = format!("molecule r={:.4} seed={}", d.ball.radius, cfg.case_seed(case));

        let (_, err) = reconstruct(&d)?;
        report.push(
            format!("{}/{:03}-reconstruction", cfg.experiment, case),
            label.clone(),
            err,
            1e-3,
            err <= 1e-3,
            "relative weighted reconstruction error",
        );

        let mut atom_failures = 0usize;
        let mut worst_size = 0.0f64;
        for atom in &d.atoms {
            let rep = validate_atom(&atom.candidate)?;
            if !rep.pass() {
                atom_failures += 1;
            }
            worst_size = worst_size.max(rep.min_passing_constant(Condition::Size));
        }
        report.push(
            format!("{}/{:03}-shell-atoms", cfg.experiment, case),
            label.clone(),
            atom_failures as f64,
            0.0,
            atom_failures == 0,
            format!("{} shell atoms, worst size ratio {worst_size:.6}", d.atoms.len()),
        );

        let mut sup_failures = 0usize;
        for sup in &d.sup_atoms {
            if !validate_atom(&sup.candidate)?.pass() {
                sup_failures += 1;
            }
        }
        report.push(
            format!("{}/{:03}-correction-atoms", cfg.experiment, case),
            label.clone(),
            sup_failures as f64,
            0.0,
            sup_failures == 0,
            format!("{} sup-normalized correction atoms", d.sup_atoms.len()),
        );

        let res_rep = validate_approx_atom(&d.residual, cfg.budgets.c_control)?;
        report.push(
            format!("{}/{:03}-residual", cfg.experiment, case),
            label.clone(),
            res_rep.min_passing_constant(Condition::MomentControl),
            cfg.budgets.c_control,
            res_rep.pass(),
            "residual validates as an approximate atom",
        );

        let sum_dev = (d.sum_t_p - d.sum_t_p_closed_form()).abs() / d.sum_t_p_closed_form();
        report.push(
            format!("{}/{:03}-coefficient-sum", cfg.experiment, case),
            label.clone(),
            sum_dev,
            0.05,
            sum_dev <= 0.05,
            format!("sum t^p = {}, closed form {}", d.sum_t_p, d.sum_t_p_closed_form()),
        );

        report.push(
            format!("{}/{:03}-biorthogonality", cfg.experiment, case),
            label.clone(),
            d.biortho_residual_max,
            1e-8,
            d.biortho_residual_max <= 1e-8,
            format!("worst dual-basis defect; Gram condition {:.3e}", d.gram_cond_max),
        );

        report.push(
            format!("{}/{:03}-dual-uniformity", cfg.experiment, case),
            label.clone(),
            d.dual_uniform_constant,
            10.0,
            d.dual_uniform_constant <= 10.0,
            "(2^k r)^|a| sup |dual polynomial| bounded uniformly in k",
        );

        report.push(
            format!("{}/{:03}-shell-poly-bound", cfg.experiment, case),
            label.clone(),
            d.poly_bound_constant,
            32.0,
            d.poly_bound_constant.is_finite() && d.poly_bound_constant <= 32.0,
            "measured sup |P_k|^q w(B_k) / ||M_k||^q, checked per input",
        );

        // dual-path bound
        let scales = ScaleGrid::dyadic(h);
        let direct = hp_norm(&molecule.f, &d.omega, d.params.p, &phi, &scales, &d.ball)?.value;
        let bound = decomposition_side_bound(&d)?;
        report.push(
            format!("{}/{:03}-dual-path", cfg.experiment, case),
            label.clone(),
            direct,
            bound * 1.05,
            direct <= bound * 1.05,
            format!("direct {direct} vs decomposition bound {bound}"),
        );
    }

    // truncation stability: the bound and the direct norm move by at most 1%
    // when the truncation index grows from 12 to 14 (one molecule, coarser h)
    {
        let h_s = 1.0 / 128.0;
        let mut cfg14 = cfg.clone();
        cfg14.family.r_lo = 0.25;
        cfg14.family.r_hi = 0.3;
        let (m14, d14) = decomposition_bundle(&cfg14, 0, 14, h_s)?;
        // same molecule function, truncated shell system at 12
        let d12 = decompose_molecule(&m14, 12, cfg.budgets.c_control)?;
        let b14 = decomposition_side_bound(&d14)?;
        let b12 = decomposition_side_bound(&d12)?;
        let delta = (b14 - b12).abs() / b12;
        report.push(
            format!("{}/900-truncation-stability", cfg.experiment),
            "shell count 12 vs 14 on one molecule".to_string(),
            delta,
            0.01,
            delta <= 0.01,
            format!("bound {b12} at 12 shells, {b14} at 14"),
        );
    }

    report.stat("c_t_max", c_t_max);
    Ok(report)
}
