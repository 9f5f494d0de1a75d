//! Cross-module invariants: two-dimensional smoke coverage, the
//! moments-from-size implication for large-ball operator images, and the
//! empirical comparability of the two mollifiers.

use hardy_core::atoms::{make_atom, validate_atom};
use hardy_core::czop::{atom_image_report, validate_kernel, KernelSpec};
use hardy_core::{
    hp_norm, Ball, GridFunction, GridSpec, HardyParams, Mollifier, Qexp, Region, ScaleGrid,
    Weight,
};

#[test]
fn two_dimensional_pipeline_smoke() {
    let h = 1.0 / 32.0;
    let spec = GridSpec::new(2, [-1.5, -1.5], [1.5, 1.5], h).unwrap();
    let ball = Ball::new([0.0, 0.0], 0.5).unwrap();
    let params = HardyParams::new(2, 1.0, Qexp::Finite(2.0), 1.0, 5.0, 1.0, 1.0, 1.0).unwrap();
    let w = Weight::power(2, -0.5).unwrap();

    // concentric closed form: Int_{B(0,r)} |x|^a dx = 2 pi r^{a+2} / (a+2)
    let m = w.closed_ball_measure(&ball).unwrap();
    let oracle = 2.0 * std::f64::consts::PI * 0.5f64.powf(1.5) / 1.5;
    assert!((m - oracle).abs() < 1e-12 * oracle);

    let atom = make_atom(&spec, &ball, &params, &w, 5).unwrap();
    let rep = validate_atom(&atom).unwrap();
    assert!(rep.pass(), "{rep:?}");

    // 2D quasi-norm evaluates and is finite
    let phi = Mollifier::gaussian(2);
    let scales = ScaleGrid::dyadic(h);
    let n = hp_norm(&atom.f, &w, 1.0, &phi, &scales, &ball).unwrap();
    assert!(n.value.is_finite() && n.value > 0.0);

    // 2D odd kernel with the angular factor validates and applies
    let k = KernelSpec::odd_min(2, 1.0);
    let v = validate_kernel(&k, 2.0, h, 100, 3);
    assert!(v.pass);
    assert!((v.c_size - 1.0).abs() < 1e-9, "c_size {}", v.c_size);
    // admissible window at n = 2, p = 1, q = 2, mu = delta = 1 is (2, 4)
    let image = atom_image_report(&k, &v, &atom, 3.0, 1, 16.0).unwrap();
    assert!(image.image.f.max_abs().is_finite());
}

#[test]
fn large_ball_image_moments_follow_from_size_conditions() {
    // for atoms with r >= 1 the moment table of the operator image is
    // controlled by the size structure alone: measured moments stay within
    // a fitted multiple of r^{n+|a|} w(2B)^{-1/p} across seeds
    let h = 1.0 / 128.0;
    let params = HardyParams::new(1, 1.0, Qexp::Finite(2.0), 1.0, 2.5, 1.0, 1.0, 1.0).unwrap();
    let w = Weight::constant(1.0).unwrap();
    let kernel = KernelSpec::odd_min(1, 1.0);
    let validation = validate_kernel(&kernel, 4.0, h, 200, 11);
    assert!(validation.pass);

    let r = 1.5;
    let ball = Ball::new([0.0, 0.0], r).unwrap();
    let spec = GridSpec::centered_1d(0.0, 2.0 * r + 0.5, h).unwrap();
    let k_annuli = 4u32;
    let mut worst_ratio = 0.0f64;
    for seed in 0..20 {
        let atom = make_atom(&spec, &ball, &params, &w, seed).unwrap();
        let image = atom_image_report(&kernel, &validation, &atom, 2.5, k_annuli, 16.0).unwrap();
        let mol_ball = image.molecule_ball;
        let wb = 2.0 * mol_ball.radius; // Lebesgue measure of 2B in 1D
        let m0 = image.image.f.moment(mol_ball.center, hardy_core::MultiIndex([0, 0])).unwrap();
        let unit = mol_ball.radius.powf(1.0) * wb.powf(-1.0 / params.p);
        worst_ratio = worst_ratio.max(m0.abs() / unit);
    }
    assert!(
        worst_ratio.is_finite() && worst_ratio < 8.0,
        "moment/size ratio {worst_ratio}"
    );
}

#[test]
fn mollifier_choices_give_comparable_norms() {
    // the space does not depend on the mollifier; empirically the two
    // built-in choices give quasi-norms within a modest ratio of each other
    let h = 1.0 / 256.0;
    let spec = GridSpec::new(1, [-4.0, 0.0], [4.0, 0.0], h).unwrap();
    let ball = Ball::new([0.0, 0.0], 0.4).unwrap();
    let params = HardyParams::new(1, 1.0, Qexp::Finite(2.0), 1.0, 3.0, 1.0, 1.0, 1.0).unwrap();
    let w = Weight::constant(1.0).unwrap();
    let scales = ScaleGrid::dyadic(h);
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let atom = make_atom(&spec, &ball, &params, &w, seed).unwrap();
        let a = hp_norm(&atom.f, &w, 1.0, &Mollifier::gaussian(1), &scales, &ball)
            .unwrap()
            .value;
        let b = hp_norm(&atom.f, &w, 1.0, &Mollifier::poly_bump(1), &scales, &ball)
            .unwrap()
            .value;
        ratios.push(a / b);
    }
    for r in &ratios {
        assert!((0.3..=3.0).contains(r), "comparability ratio {r}");
    }
}

#[test]
fn maximal_function_of_indicator_dominates_averages() {
    // on an indicator the grand maximal function at small scales recovers
    // the function values, so the L^1 bound is attained up to grid effects
    let h = 1.0 / 256.0;
    let spec = GridSpec::new(1, [-2.0, 0.0], [2.0, 0.0], h).unwrap();
    let f = GridFunction::from_fn(spec, |x| if x[0].abs() < 0.5 { 1.0 } else { 0.0 }).unwrap();
    let m = hardy_core::local_maximal(&f, &Mollifier::gaussian(1), &ScaleGrid::dyadic(h)).unwrap();
    let l1_f = f.integrate_map(Region::All, |_, v| v.abs()).value;
    let l1_m = m.integrate_map(Region::All, |_, v| v.abs()).value;
    assert!(l1_m >= l1_f * (1.0 - 5e-3), "{l1_m} vs {l1_f}");
}
