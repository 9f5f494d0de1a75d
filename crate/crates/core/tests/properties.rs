//! Property tests for the algebraic invariants of the quadrature, norm and
//! convolution layer.

use proptest::prelude::*;

use hardy_core::{
    atomic_norm_upper, convolve_scale, Ball, GridFunction, GridSpec, Mollifier, Qexp, Region,
    Weight,
};

fn grid(h: f64) -> GridSpec {
    GridSpec::new(1, [-4.0, 0.0], [4.0, 0.0], h).unwrap()
}

fn smooth_function(spec: GridSpec, a: f64, b: f64, k: f64) -> GridFunction {
    GridFunction::from_fn(spec, move |x| {
        a * (k * x[0]).sin() + b * (-(x[0] * x[0]) / 2.0).exp()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_norm_is_absolutely_homogeneous(
        c in -100.0f64..100.0,
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        k in 0.5f64..6.0,
    ) {
        prop_assume!(c.abs() > 1e-6);
        let spec = grid(1.0 / 64.0);
        let f = smooth_function(spec, a, b, k);
        let w = Weight::power(1, -0.25).unwrap();
        for q in [Qexp::Finite(1.0), Qexp::Finite(2.0), Qexp::Infinity] {
            let n1 = f.weighted_lq_norm(&w, q, Region::All);
            let n2 = f.scaled(c).unwrap().weighted_lq_norm(&w, q, Region::All);
            prop_assert!((n2 - c.abs() * n1).abs() <= 1e-12 * n1.max(1.0) * c.abs().max(1.0));
        }
    }

    #[test]
    fn convolution_is_linear(
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        k1 in 0.5f64..5.0,
        k2 in 0.5f64..5.0,
        t in 0.1f64..1.0,
    ) {
        let spec = grid(1.0 / 32.0);
        let f = smooth_function(spec, a, 0.3, k1);
        let g = smooth_function(spec, 0.4, b, k2);
        let phi = Mollifier::gaussian(1);
        let sum = convolve_scale(&f.add(&g).unwrap(), &phi, t).unwrap().f;
        let cf = convolve_scale(&f, &phi, t).unwrap().f;
        let cg = convolve_scale(&g, &phi, t).unwrap().f;
        let scale = sum.max_abs().max(1.0);
        for i in 0..spec.len() {
            prop_assert!(
                (sum.values[i] - cf.values[i] - cg.values[i]).abs() / scale < 1e-10
            );
        }
    }

    #[test]
    fn quadrature_is_exact_for_constants_on_aligned_regions(
        cells in 8usize..64,
        value in -5.0f64..5.0,
    ) {
        let h = 1.0 / 32.0;
        let half = cells as f64 * h;
        let spec = GridSpec::new(1, [-half, 0.0], [half, 0.0], h).unwrap();
        let f = GridFunction::from_fn(spec, |_| value).unwrap();
        let v = f.integrate(Region::All).value;
        prop_assert!((v - value * 2.0 * half).abs() <= 1e-12 * (value.abs() + 1.0) * half);
    }

    #[test]
    fn ball_partitions_into_dyadic_shells(
        center in -1.0f64..1.0,
        r in 0.05f64..0.4,
        a in -2.0f64..2.0,
        k in 0.5f64..6.0,
    ) {
        let spec = grid(1.0 / 128.0);
        let f = smooth_function(spec, a, 0.7, k);
        let ball = Ball::new([center, 0.0], r).unwrap();
        let whole = f.integrate(Region::Ball(ball.dilate(8.0))).value;
        let mut parts = f.integrate(Region::Ball(ball)).value;
        for j in 0..3 {
            let ann = hardy_core::Annulus::new(
                ball.center,
                r * 2f64.powi(j),
                r * 2f64.powi(j + 1),
            )
            .unwrap();
            parts += f.integrate(Region::Annulus(ann)).value;
        }
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1.0));
    }

    #[test]
    fn atomic_norm_upper_bounds_and_scales(
        coeffs in prop::collection::vec(-10.0f64..10.0, 1..20),
        p in 0.3f64..1.0,
        c in 0.1f64..10.0,
    ) {
        let n = atomic_norm_upper(&coeffs, p);
        let max = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // dominates the sup of the coefficients
        prop_assert!(n + 1e-12 >= max);
        // absolutely homogeneous
        let scaled: Vec<f64> = coeffs.iter().map(|v| c * v).collect();
        let ns = atomic_norm_upper(&scaled, p);
        prop_assert!((ns - c * n).abs() <= 1e-9 * (c * n).max(1.0));
    }

    #[test]
    fn maximal_function_monotone_under_scale_refinement(
        a in 0.2f64..2.0,
        k in 0.5f64..4.0,
    ) {
        let h = 1.0 / 64.0;
        let spec = grid(h);
        let f = smooth_function(spec, a, 0.5, k);
        let phi = Mollifier::gaussian(1);
        let coarse = hardy_core::ScaleGrid::dyadic(h);
        let fine = hardy_core::ScaleGrid::dyadic_refined(h, 2);
        let mc = hardy_core::local_maximal(&f, &phi, &coarse).unwrap();
        let mf = hardy_core::local_maximal(&f, &phi, &fine).unwrap();
        for i in 0..spec.len() {
            prop_assert!(mf.values[i] + 1e-13 >= mc.values[i]);
        }
    }
}
