//! Kernel conditions: the default odd kernel meets the size condition with
//! constant exactly 1, its smoothness constant is finite and stable under
//! cloud enlargement, the discrete pairing satisfies the adjoint identity,
//! and the operator-norm probe behaves on reference kernels.

use anyhow::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hardy_core::czop::{
    apply_operator, apply_operator_adjoint, l2_norm_estimate, pairing, validate_kernel,
    KernelSpec,
};
use hardy_core::{GridFunction, GridSpec};

use crate::config::ExperimentConfig;
use crate::report::{EnvStamp, RunReport};

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let h = cfg.grid_h;
    let mut report = RunReport::new(
        &cfg.experiment,
        EnvStamp { grid_h: h, k_max: 0, scale_count: 0, seed: cfg.seed },
    );

    let kernel = KernelSpec::odd_min(1, cfg.params.mu);
    let v = validate_kernel(&kernel, 4.0, h, 400, cfg.seed);
    report.push(
        format!("{}/000-size-constant", cfg.experiment),
        "odd kernel size constant over the sample cloud".to_string(),
        (v.c_size - 1.0).abs(),
        1e-12,
        (v.c_size - 1.0).abs() <= 1e-12,
        format!("fitted C_size = {}", v.c_size),
    );
    report.push(
        format!("{}/001-smoothness-stable", cfg.experiment),
        "smoothness constant finite and stable under cloud doubling".to_string(),
        v.c_smooth,
        f64::INFINITY,
        v.pass && v.c_smooth.is_finite(),
        format!("fitted C_smooth = {}", v.c_smooth),
    );

    let vz = validate_kernel(&KernelSpec::zero(1), 4.0, h, 200, cfg.seed);
    report.push(
        format!("{}/002-zero-kernel", cfg.experiment),
        "zero kernel validates with zero constants".to_string(),
        vz.c_size + vz.c_smooth,
        0.0,
        vz.pass && vz.c_size == 0.0 && vz.c_smooth == 0.0,
        "",
    );
    let vp = validate_kernel(&KernelSpec::plain_inverse(1), 4.0, h, 400, cfg.seed);
    report.push(
        format!("{}/003-no-decay-fails", cfg.experiment),
        "kernel without inhomogeneous decay fails the size fit".to_string(),
        if vp.pass { 1.0 } else { 0.0 },
        0.0,
        !vp.pass,
        "instability under cloud enlargement is the expected failure",
    );

    // adjoint identity on disjoint-support pairs
    let spec = GridSpec::new(1, [-4.0, 0.0], [4.0, 0.0], h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xad_01);
    let mut worst = 0.0f64;
    for _ in 0..cfg.family.cases.max(20) {
        let c1 = rng.gen_range(-2.5..-0.5);
        let c2 = rng.gen_range(0.5..2.5);
        let r1 = rng.gen_range(0.1..0.4);
        let r2 = rng.gen_range(0.1..0.4);
        let f = bump(spec, c1, r1)?;
        let g = bump(spec, c2, r2)?;
        let tf = apply_operator(&kernel, &v, &f, &spec)?;
        let tsg = apply_operator_adjoint(&kernel, &v, &g, &spec)?;
        let a = pairing(&tf, &g)?;
        let b = pairing(&f, &tsg)?;
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
    }
    report.push(
        format!("{}/004-adjoint-identity", cfg.experiment),
        format!("<Tf, g> = <f, T*g> over {} disjoint-support pairs", cfg.family.cases.max(20)),
        worst,
        1e-6,
        worst <= 1e-6,
        "discrete transpose identity with symmetric excision",
    );

    // operator-norm probes
    let ki = KernelSpec::smoothed_identity(1, 0.2);
    let vi = validate_kernel(&ki, 4.0, h, 200, cfg.seed);
    let est_i = l2_norm_estimate(&ki, &vi, &spec, 30, cfg.seed)?;
    report.push(
        format!("{}/005-identity-norm", cfg.experiment),
        "norm probe on a mollified identity".to_string(),
        (est_i - 1.0).abs(),
        0.10,
        (est_i - 1.0).abs() <= 0.10,
        format!("estimate {est_i}"),
    );
    let est_h = l2_norm_estimate(&kernel, &v, &spec, 30, cfg.seed)?;
    let spec_fine = GridSpec::new(1, [-4.0, 0.0], [4.0, 0.0], h / 2.0)?;
    let est_h2 = l2_norm_estimate(&kernel, &v, &spec_fine, 30, cfg.seed)?;
    let drift = (est_h2 - est_h).abs() / est_h;
    report.push(
        format!("{}/006-odd-kernel-norm", cfg.experiment),
        "odd-kernel norm estimate finite and refinement-stable".to_string(),
        drift,
        0.15,
        est_h.is_finite() && drift <= 0.15,
        format!("estimate {est_h} at h, {est_h2} at h/2"),
    );
    report.stat("l2_norm_estimate", est_h);
    Ok(report)
}

fn bump(spec: GridSpec, center: f64, r: f64) -> Result<GridFunction> {
    Ok(GridFunction::from_fn(spec, move |x| {
        let u = (x[0] - center) / r;
        if u.abs() < 1.0 {
            (1.0 - u * u).powi(3)
        } else {
            0.0
        }
    })?)
}
