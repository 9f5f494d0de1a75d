//! Muckenhoupt weight families, weighted ball measures, empirical A_q
//! constants, critical-index bracketing and doubling profiles.
//!
//! Constants like `[w]_{A_1}` are always *estimated from below* by a sup over
//! a finite ball family; the family generators are deterministic (log-spaced
//! radii times lattice centers plus a seeded batch) so estimates are
//! reproducible. Closed forms back the constant and power families (any ball
//! in 1D, origin-centered in 2D) and cross-check the quadrature.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{dist, Ball, Point};
use crate::grid::GridSpec;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightFamily {
    /// w(x) = c, c > 0
    Constant(f64),
    /// w(x) = |x|^a, a > -n
    Power { a: f64 },
    /// w(x) = |x - x0|^a
    ShiftedPower { a: f64, x0: Point },
    /// product of two factors
    Product(Box<WeightFamily>, Box<WeightFamily>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    pub family: WeightFamily,
    pub dim: usize,
}

impl Weight {
    pub fn constant(c: f64) -> Result<Weight> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::DegenerateWeight(format!("constant must be positive, got {c}")));
        }
        Ok(Weight { family: WeightFamily::Constant(c), dim: 1 })
    }

    pub fn power(dim: usize, a: f64) -> Result<Weight> {
        Self::check_exponent(dim, a)?;
        Ok(Weight { family: WeightFamily::Power { a }, dim })
    }

    pub fn shifted_power(dim: usize, a: f64, x0: Point) -> Result<Weight> {
        Self::check_exponent(dim, a)?;
        Ok(Weight { family: WeightFamily::ShiftedPower { a, x0 }, dim })
    }

    pub fn product(dim: usize, f1: Weight, f2: Weight) -> Weight {
        Weight { family: WeightFamily::Product(Box::new(f1.family), Box::new(f2.family)), dim }
    }

    fn check_exponent(dim: usize, a: f64) -> Result<()> {
        if !(a > -(dim as f64)) {
            return Err(Error::DegenerateWeight(format!(
                "power exponent must exceed -n for local integrability, got {a}"
            )));
        }
        Ok(())
    }

    /// Intended-A_1 validity for power families: -n < a <= 0.
    pub fn is_intended_a1(&self) -> bool {
        fn fam_ok(f: &WeightFamily) -> bool {
            match f {
                WeightFamily::Constant(_) => true,
                WeightFamily::Power { a } | WeightFamily::ShiftedPower { a, .. } => *a <= 0.0,
                WeightFamily::Product(a, b) => fam_ok(a) && fam_ok(b),
            }
        }
        fam_ok(&self.family)
    }

    pub fn eval(&self, x: Point) -> f64 {
        fn ev(f: &WeightFamily, dim: usize, x: Point) -> f64 {
            match f {
                WeightFamily::Constant(c) => *c,
                WeightFamily::Power { a } => dist(dim, x, [0.0, 0.0]).powf(*a),
                WeightFamily::ShiftedPower { a, x0 } => dist(dim, x, *x0).powf(*a),
                WeightFamily::Product(f1, f2) => ev(f1, dim, x) * ev(f2, dim, x),
            }
        }
        ev(&self.family, self.dim, x)
    }

    /// Pointwise power of the weight, `w^e`, staying inside the family where
    /// possible (used for the dual-exponent averages of A_q).
    pub fn pow(&self, e: f64) -> Weight {
        fn pw(f: &WeightFamily, e: f64) -> WeightFamily {
            match f {
                WeightFamily::Constant(c) => WeightFamily::Constant(c.powf(e)),
                WeightFamily::Power { a } => WeightFamily::Power { a: a * e },
                WeightFamily::ShiftedPower { a, x0 } => {
                    WeightFamily::ShiftedPower { a: a * e, x0: *x0 }
                }
                WeightFamily::Product(f1, f2) => {
                    WeightFamily::Product(Box::new(pw(f1, e)), Box::new(pw(f2, e)))
                }
            }
        }
        Weight { family: pw(&self.family, e), dim: self.dim }
    }

    /// Centers where the family is singular or vanishing; probes for
    /// boundedness detection concentrate there.
    pub fn singular_points(&self) -> Vec<Point> {
        fn sp(f: &WeightFamily, out: &mut Vec<Point>) {
            match f {
                WeightFamily::Constant(_) => {}
                WeightFamily::Power { a } => {
                    if *a != 0.0 {
                        out.push([0.0, 0.0]);
                    }
                }
                WeightFamily::ShiftedPower { a, x0 } => {
                    if *a != 0.0 {
                        out.push(*x0);
                    }
                }
                WeightFamily::Product(f1, f2) => {
                    sp(f1, out);
                    sp(f2, out);
                }
            }
        }
        let mut out = Vec::new();
        sp(&self.family, &mut out);
        out
    }

    /// Closed-form essential infimum over a ball, where the family admits
    /// one: power weights are monotone in the distance to their singular
    /// point, so the infimum sits at the nearest or farthest point.
    pub fn closed_essinf_ball(&self, ball: &Ball) -> Option<f64> {
        fn essinf(f: &WeightFamily, dim: usize, ball: &Ball) -> Option<f64> {
            match f {
                WeightFamily::Constant(c) => Some(*c),
                WeightFamily::Power { a } => {
                    essinf(&WeightFamily::ShiftedPower { a: *a, x0: [0.0, 0.0] }, dim, ball)
                }
                WeightFamily::ShiftedPower { a, x0 } => {
                    let d = dist(dim, ball.center, *x0);
                    let d_min = (d - ball.radius).max(0.0);
                    let d_max = d + ball.radius;
                    if *a <= 0.0 {
                        Some(d_max.powf(*a))
                    } else if d_min == 0.0 {
                        Some(0.0)
                    } else {
                        Some(d_min.powf(*a))
                    }
                }
                WeightFamily::Product(f1, f2) => match (f1.as_ref(), f2.as_ref()) {
                    (WeightFamily::Constant(c), other) | (other, WeightFamily::Constant(c)) => {
                        essinf(other, dim, ball).map(|m| c * m)
                    }
                    _ => None,
                },
            }
        }
        essinf(&self.family, self.dim, ball)
    }

    /// Closed-form `w(B) = Int_B w dx`, where the family admits one.
    /// 1D power weights integrate via the antiderivative
    /// `sign(x) |x|^{a+1} / (a+1)` over any interval; 2D power weights only
    /// over concentric balls. Returns `f64::INFINITY` for non-integrable
    /// dual exponents (a <= -n with the singular point inside).
    pub fn closed_ball_measure(&self, ball: &Ball) -> Option<f64> {
        fn anti(a: f64, x: f64) -> f64 {
            // antiderivative of |x|^a in 1D
            x.signum() * x.abs().powf(a + 1.0) / (a + 1.0)
        }
        fn measure(f: &WeightFamily, dim: usize, ball: &Ball) -> Option<f64> {
            match f {
                WeightFamily::Constant(c) => Some(c * ball.volume(dim)),
                WeightFamily::Power { a } => {
                    measure(&WeightFamily::ShiftedPower { a: *a, x0: [0.0, 0.0] }, dim, ball)
                }
                WeightFamily::ShiftedPower { a, x0 } => {
                    if dim == 1 {
                        let lo = ball.center[0] - ball.radius;
                        let hi = ball.center[0] + ball.radius;
                        let contains_sing = lo < x0[0] && x0[0] < hi;
                        if contains_sing && *a <= -1.0 {
                            return Some(f64::INFINITY);
                        }
                        Some(anti(*a, hi - x0[0]) - anti(*a, lo - x0[0]))
                    } else {
                        // concentric case only
                        if dist(2, ball.center, *x0) > 1e-14 * ball.radius.max(1.0) {
                            return None;
                        }
                        if *a <= -2.0 {
                            return Some(f64::INFINITY);
                        }
                        Some(
                            2.0 * core::f64::consts::PI * ball.radius.powf(a + 2.0)
                                / (a + 2.0),
                        )
                    }
                }
                WeightFamily::Product(f1, f2) => {
                    // only a constant factor keeps the product in closed form
                    match (f1.as_ref(), f2.as_ref()) {
                        (WeightFamily::Constant(c), other)
                        | (other, WeightFamily::Constant(c)) => {
                            measure(other, dim, ball).map(|m| c * m)
                        }
                        _ => None,
                    }
                }
            }
        }
        measure(&self.family, self.dim, ball)
    }
}

/// Quadrature sums of a weight over ball nodes of a backing grid.
pub struct BallStats {
    /// node count
    pub count: usize,
    /// `sum w(x_i) h^n`
    pub mass: f64,
    /// smallest node value
    pub min: f64,
    /// `|B|` as counted by the same nodes
    pub node_volume: f64,
}

pub fn ball_stats(w: &Weight, spec: &GridSpec, ball: &Ball) -> Result<BallStats> {
    let mut stats = BallStats { count: 0, mass: 0.0, min: f64::INFINITY, node_volume: 0.0 };
    let cell = spec.cell_volume();
    let (i0, i1) = spec.axis_range(0, ball.center[0] - ball.radius, ball.center[0] + ball.radius);
    let (i0, i1) = (i0.max(0), i1.min(spec.n[0] as isize - 1));
    let (j0, j1) = if spec.dim == 2 {
        let (a, b) = spec.axis_range(1, ball.center[1] - ball.radius, ball.center[1] + ball.radius);
        (a.max(0), b.min(spec.n[1] as isize - 1))
    } else {
        (0, 0)
    };
    for j in j0..=j1 {
        for i in i0..=i1 {
            let x = spec.lattice_point(i, j);
            if ball.contains(spec.dim, x) {
                let v = w.eval(x);
                if !v.is_finite() {
                    return Err(Error::DegenerateWeight(format!(
                        "weight not finite at node ({}, {}); offset the grid off the singularity",
                        x[0], x[1]
                    )));
                }
                stats.count += 1;
                stats.mass += v * cell;
                stats.min = stats.min.min(v);
                stats.node_volume += cell;
            }
        }
    }
    Ok(stats)
}

/// `w(B)`: closed form where the family admits one, midpoint quadrature on
/// the backing grid otherwise.
pub fn measure_ball(w: &Weight, ball: &Ball, spec: &GridSpec) -> Result<f64> {
    if let Some(m) = w.closed_ball_measure(ball) {
        return Ok(m);
    }
    measure_ball_quadrature(w, ball, spec)
}

pub fn measure_ball_quadrature(w: &Weight, ball: &Ball, spec: &GridSpec) -> Result<f64> {
    let stats = ball_stats(w, spec, ball)?;
    if stats.count == 0 {
        return Err(Error::OutOfDomain(format!(
            "ball at ({}, {}) with radius {} contains no grid node",
            ball.center[0], ball.center[1], ball.radius
        )));
    }
    Ok(stats.mass)
}

/// Deterministic ball family: log-spaced radii crossed with lattice centers,
/// plus a seeded random batch.
#[allow(clippy::too_many_arguments)]
pub fn ball_family(
    dim: usize,
    center_lo: f64,
    center_hi: f64,
    lattice: usize,
    r_lo: f64,
    r_hi: f64,
    radii: usize,
    random_extra: usize,
    seed: u64,
) -> Vec<Ball> {
    let mut balls = Vec::new();
    let rad = |k: usize, n: usize| -> f64 {
        if n <= 1 {
            r_lo
        } else {
            r_lo * (r_hi / r_lo).powf(k as f64 / (n - 1) as f64)
        }
    };
    let cen = |k: usize, n: usize| -> f64 {
        if n <= 1 {
            0.5 * (center_lo + center_hi)
        } else {
            center_lo + (center_hi - center_lo) * k as f64 / (n - 1) as f64
        }
    };
    for ci in 0..lattice {
        for cj in 0..(if dim == 2 { lattice } else { 1 }) {
            for rk in 0..radii {
                let c = [cen(ci, lattice), if dim == 2 { cen(cj, lattice) } else { 0.0 }];
                balls.push(Ball { center: c, radius: rad(rk, radii) });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_extra {
        let c = [
            rng.gen_range(center_lo..center_hi),
            if dim == 2 { rng.gen_range(center_lo..center_hi) } else { 0.0 },
        ];
        let r = r_lo * (r_hi / r_lo).powf(rng.gen_range(0.0..1.0));
        balls.push(Ball { center: c, radius: r });
    }
    balls
}

/// Lower estimate of `[w]_{A_1} = sup_B (avg_B w) / essinf_B w`, with the
/// essential infimum read as the smallest node value.
pub fn estimate_a1_constant(w: &Weight, balls: &[Ball], spec: &GridSpec) -> Result<f64> {
    if balls.is_empty() {
        return Err(Error::Precondition("empty ball family".into()));
    }
    let mut best = 0.0f64;
    for b in balls {
        let stats = ball_stats(w, spec, b)?;
        if stats.count == 0 {
            return Err(Error::OutOfDomain("family ball outside the quadrature domain".into()));
        }
        if !(stats.min > 0.0) {
            return Err(Error::DegenerateWeight(
                "weight vanishes on a node of a family ball".into(),
            ));
        }
        best = best.max(stats.mass / stats.node_volume / stats.min);
    }
    Ok(best)
}

/// Lower estimate of `[w]_{A_q}` for q > 1:
/// `sup_B (avg_B w) (avg_B w^{1/(1-q)})^{q-1}`.
pub fn estimate_aq_constant(w: &Weight, q: f64, balls: &[Ball], spec: &GridSpec) -> Result<f64> {
    if !(q > 1.0) {
        return Err(Error::Precondition(format!("A_q estimate needs q > 1, got {q}")));
    }
    if balls.is_empty() {
        return Err(Error::Precondition("empty ball family".into()));
    }
    let dual = w.pow(1.0 / (1.0 - q));
    let mut best = 0.0f64;
    for b in balls {
        let sw = ball_stats(w, spec, b)?;
        let sd = ball_stats(&dual, spec, b)?;
        if sw.count == 0 {
            return Err(Error::OutOfDomain("family ball outside the quadrature domain".into()));
        }
        let avg_w = sw.mass / sw.node_volume;
        let avg_d = sd.mass / sd.node_volume;
        best = best.max(avg_w * avg_d.powf(q - 1.0));
    }
    Ok(best)
}

/// Single-ball A_q product (the family estimate restricted to one ball);
/// q = 1 uses the node-infimum ratio.
pub fn single_ball_aq(w: &Weight, q: f64, ball: &Ball, spec: &GridSpec) -> Result<f64> {
    if q == 1.0 {
        estimate_a1_constant(w, core::slice::from_ref(ball), spec)
    } else {
        estimate_aq_constant(w, q, core::slice::from_ref(ball), spec)
    }
}

/// Bracketing of the critical index `q_w = inf { q : w in A_q }`.
#[derive(Debug, Clone)]
pub struct CriticalIndexEstimate {
    pub lo: f64,
    pub hi: f64,
    /// (q, bounded?) probes in evaluation order
    pub trace: Vec<(f64, bool)>,
}

/// Single-ball A_q product from closed forms, when the family admits them.
/// Returns infinity when the infimum vanishes or the dual mass diverges.
fn closed_single_ball_aq(w: &Weight, q: f64, ball: &Ball) -> Option<f64> {
    let vol = ball.volume(w.dim);
    let avg_w = w.closed_ball_measure(ball)? / vol;
    if q == 1.0 {
        let inf = w.closed_essinf_ball(ball)?;
        if inf <= 0.0 {
            return Some(f64::INFINITY);
        }
        Some(avg_w / inf)
    } else {
        let dual_mass = w.pow(1.0 / (1.0 - q)).closed_ball_measure(ball)?;
        if !dual_mass.is_finite() {
            return Some(f64::INFINITY);
        }
        Some(avg_w * (dual_mass / vol).powf(q - 1.0))
    }
}

/// Boundedness probe: the A_q product over single balls shrinking onto each
/// singular center must not grow along the radius ladder. For the power
/// families the product is scale-invariant when the dual mass converges and
/// grows polynomially in r/h when it does not, so the growth ratio separates
/// the two regimes. Closed forms are used where the family admits them; the
/// node-sum estimate backs everything else.
fn bounded_at(w: &Weight, q: f64, spec: &GridSpec) -> Result<bool> {
    let centers = w.singular_points();
    if centers.is_empty() {
        return Ok(true);
    }
    let ladder = 8usize;
    let r_lo = 32.0 * spec.h;
    let extent = (0..spec.dim)
        .map(|ax| (spec.hi[ax] - spec.lo[ax]) / 2.0)
        .fold(f64::INFINITY, f64::min);
    let r_hi = extent / 2.0;
    if r_hi <= r_lo * 2.0 {
        return Err(Error::DomainTooSmall(
            "critical-index probe needs a wider radius ladder; refine the grid".into(),
        ));
    }
    for c in centers {
        let mut first = None;
        let mut last = 0.0;
        for k in 0..ladder {
            let r = r_lo * (r_hi / r_lo).powf(k as f64 / (ladder - 1) as f64);
            let ball = Ball { center: c, radius: r };
            let est = match closed_single_ball_aq(w, q, &ball) {
                Some(v) => v,
                None => single_ball_aq(w, q, &ball, spec)?,
            };
            if !est.is_finite() {
                return Ok(false);
            }
            if first.is_none() {
                first = Some(est);
            }
            last = est;
        }
        let growth = last / first.unwrap_or(1.0);
        if growth > 1.05 {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn critical_index_estimate(w: &Weight, spec: &GridSpec) -> Result<CriticalIndexEstimate> {
    let mut trace = Vec::new();
    let a1 = bounded_at(w, 1.0, spec)?;
    trace.push((1.0, a1));
    if a1 {
        return Ok(CriticalIndexEstimate { lo: 1.0, hi: 1.0, trace });
    }
    // find a bounded upper endpoint
    let mut hi = 2.0;
    loop {
        let ok = bounded_at(w, hi, spec)?;
        trace.push((hi, ok));
        if ok {
            break;
        }
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::NonConvergentBisection { trace });
        }
    }
    let mut lo = 1.0;
    while hi - lo > 0.05 {
        let mid = 0.5 * (lo + hi);
        let ok = bounded_at(w, mid, spec)?;
        trace.push((mid, ok));
        if ok {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalIndexEstimate { lo, hi, trace })
}

/// One ring of the doubling profile.
#[derive(Debug, Clone, Copy)]
pub struct DoublingRow {
    pub k: u32,
    /// `w(2^k B) / w(B)`
    pub ratio: f64,
    /// per-step exponent `log2(w(2^k B) / w(2^{k-1} B))`
    pub step_exponent: f64,
    /// `w(2^k B) <= a1_est 2^{kn} w(B)` when an A_1 estimate is supplied
    pub upper_bound_ok: Option<bool>,
}

/// Measured growth of `w(2^k B)` for k = 1..k_max. All measures come from
/// the same node sums so the A_1 upper-bound check compares like with like.
pub fn doubling_profile(
    w: &Weight,
    ball: &Ball,
    k_max: u32,
    spec: &GridSpec,
    a1_est: Option<f64>,
) -> Result<Vec<DoublingRow>> {
    if !(1..=12).contains(&k_max) {
        return Err(Error::Precondition(format!("k_max must lie in 1..=12, got {k_max}")));
    }
    let outer = ball.dilate(2f64.powi(k_max as i32));
    for axis in 0..spec.dim {
        if outer.center[axis] - outer.radius < spec.lo[axis]
            || outer.center[axis] + outer.radius > spec.hi[axis]
        {
            return Err(Error::OutOfDomain(format!(
                "2^k_max B leaves the quadrature domain on axis {axis}"
            )));
        }
    }
    let n = spec.dim as f64;
    let base = measure_ball_quadrature(w, ball, spec)?;
    let mut prev = base;
    let mut rows = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let m = measure_ball_quadrature(w, &ball.dilate(2f64.powi(k as i32)), spec)?;
        rows.push(DoublingRow {
            k,
            ratio: m / base,
            step_exponent: (m / prev).log2(),
            upper_bound_ok: a1_est.map(|c| {
                m <= c * 2f64.powf(k as f64 * n) * base * (1.0 + tol::SCALING_REL)
            }),
        });
        prev = m;
    }
    Ok(rows)
}

/// Both sides of the averaged bound
/// `avg_B |f| <= (C / w(B) * Int_B |f|^q w)^{1/q}`,
/// with C the single-ball A_q product measured on B itself.
pub fn avg_bound_check(
    w: &Weight,
    f: &crate::grid::GridFunction,
    ball: &Ball,
    q: f64,
) -> Result<(f64, f64, f64)> {
    if !(q >= 1.0) {
        return Err(Error::Precondition(format!("q must be >= 1, got {q}")));
    }
    let spec = &f.spec;
    let region = crate::geom::Region::Ball(*ball);
    let vol = f.integrate_map(region, |_, _| 1.0);
    if vol.degenerate {
        return Err(Error::OutOfDomain("ball contains no grid node".into()));
    }
    let lhs = f.integrate_map(region, |_, v| v.abs()).value / vol.value;
    let c = single_ball_aq(w, q, ball, spec)?;
    let wb = measure_ball_quadrature(w, ball, spec)?;
    let fq = f
        .integrate_map(region, |x, v| {
            let a = v.abs();
            if q == 1.0 {
                a * w.eval(x)
            } else {
                a.powf(q) * w.eval(x)
            }
        })
        .value;
    let rhs = (c / wb * fq).powf(1.0 / q);
    Ok((lhs, rhs, rhs - lhs))
}

/// Summary of the measured weight characteristics.
#[derive(Debug, Clone)]
pub struct WeightReport {
    pub a1_constant_est: f64,
    pub aq_constant_est: Vec<(f64, f64)>,
    pub critical_index_est: (f64, f64),
    /// (k, growth exponent) rows for a reference ball
    pub doubling_exponents: Vec<(u32, f64)>,
}

pub fn weight_report(
    w: &Weight,
    spec: &GridSpec,
    balls: &[Ball],
    qs: &[f64],
    doubling_ball: &Ball,
    k_max: u32,
) -> Result<WeightReport> {
    let a1 = estimate_a1_constant(w, balls, spec)?;
    let mut aq = Vec::new();
    for &q in qs {
        aq.push((q, estimate_aq_constant(w, q, balls, spec)?));
    }
    let ci = critical_index_estimate(w, spec)?;
    let rows = doubling_profile(w, doubling_ball, k_max, spec, Some(a1))?;
    Ok(WeightReport {
        a1_constant_est: a1,
        aq_constant_est: aq,
        critical_index_est: (ci.lo, ci.hi),
        doubling_exponents: rows.iter().map(|r| (r.k, r.step_exponent)).collect(),
    })
}
