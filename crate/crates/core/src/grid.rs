//! Uniform cell-centered grids on axis-aligned boxes in R^n (n in {1, 2})
//! and compactly supported functions sampled on them.
//!
//! Nodes sit at cell centers, `lo + (i + 1/2) h`, so a symmetric box never
//! places a node on the origin; power weights |x|^a with a > -n then stay
//! finite at every node and the midpoint quadrature of their integrable
//! singularity converges.
//!
//! Quadrature is the midpoint rule: a node contributes `f(x_i) h^n` whenever
//! its cell center lies in the region. It is exact for grid-constant
//! functions on cell-aligned regions and positivity-preserving.

use crate::error::{Error, Result};
use crate::geom::{Ball, MultiIndex, Point, Region};
use crate::hardy::Mollifier;
use crate::tol;
use crate::weights::Weight;

/// Exponent for the weighted Lebesgue norm: finite q >= 1 or the sup-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Qexp {
    Finite(f64),
    Infinity,
}

impl Qexp {
    pub fn finite(q: f64) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::Precondition(format!("q must be >= 1, got {q}")));
        }
        Ok(Qexp::Finite(q))
    }

    /// 1/q, with 1/inf = 0.
    pub fn recip(&self) -> f64 {
        match self {
            Qexp::Finite(q) => 1.0 / q,
            Qexp::Infinity => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
    pub h: f64,
    /// nodes per axis; n[1] = 1 in dimension 1
    pub n: [usize; 2],
}

impl GridSpec {
    pub fn new(dim: usize, lo: Point, hi: Point, h: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::BadDimension(dim));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Precondition(format!("spacing must be positive, got {h}")));
        }
        let mut n = [1usize; 2];
        for axis in 0..dim {
            let span = hi[axis] - lo[axis];
            let cells = span / h;
            let rounded = cells.round();
            if rounded < 1.0 || ((cells - rounded) / cells.max(1.0)).abs() > 1e-12 {
                return Err(Error::IncommensurateGrid { axis, span, h });
            }
            n[axis] = rounded as usize;
            if n[axis] < 8 {
                return Err(Error::GridTooCoarse { axis, nodes: n[axis] });
            }
        }
        Ok(GridSpec { dim, lo, hi, h, n })
    }

    /// 1D helper: symmetric box around a center, sized to cover `radius` with
    /// a whole number of cells.
    pub fn centered_1d(center: f64, radius: f64, h: f64) -> Result<Self> {
        let cells = (radius / h).ceil().max(4.0) as usize;
        let half = cells as f64 * h;
        GridSpec::new(1, [center - half, 0.0], [center + half, 0.0], h)
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.h
        } else {
            self.h * self.h
        }
    }

    #[inline]
    pub fn node(&self, flat: usize) -> Point {
        let i = flat % self.n[0];
        let j = flat / self.n[0];
        [
            self.lo[0] + (i as f64 + 0.5) * self.h,
            if self.dim == 2 { self.lo[1] + (j as f64 + 0.5) * self.h } else { 0.0 },
        ]
    }

    /// Coordinate on the (possibly extended) node lattice: integer indices
    /// outside [0, n) address cells beyond the box.
    #[inline]
    pub fn lattice_point(&self, i: isize, j: isize) -> Point {
        [
            self.lo[0] + (i as f64 + 0.5) * self.h,
            if self.dim == 2 { self.lo[1] + (j as f64 + 0.5) * self.h } else { 0.0 },
        ]
    }

    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    /// Inclusive lattice index range whose cell centers can fall within
    /// `[lo_coord, hi_coord]` on the given axis.
    pub fn axis_range(&self, axis: usize, lo_coord: f64, hi_coord: f64) -> (isize, isize) {
        let a = ((lo_coord - self.lo[axis]) / self.h - 0.5).floor() as isize;
        let b = ((hi_coord - self.lo[axis]) / self.h - 0.5).ceil() as isize;
        (a, b)
    }

    /// A grid with the same lattice covering this box extended by
    /// `extra` length units on every side.
    pub fn extended(&self, extra: f64) -> Result<GridSpec> {
        let cells = (extra / self.h).ceil().max(0.0);
        let pad = cells * self.h;
        let mut lo = self.lo;
        let mut hi = self.hi;
        for axis in 0..self.dim {
            lo[axis] -= pad;
            hi[axis] += pad;
        }
        GridSpec::new(self.dim, lo, hi, self.h)
    }
}

/// Midpoint-rule integral of `f` over a region.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    /// true when no cell center fell inside the region
    pub degenerate: bool,
}

/// A real function sampled on a uniform grid, zero outside its box.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub support_hint: Option<Ball>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>, support_hint: Option<Ball>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Precondition(format!(
                "value count {} does not match grid size {}",
                values.len(),
                spec.len()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
        }
        let f = GridFunction { spec, values, support_hint };
        f.check_support_hint()?;
        Ok(f)
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        GridFunction { spec, values: vec![0.0; n], support_hint: None }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values: Vec<f64> = (0..spec.len()).map(|k| f(spec.node(k))).collect();
        GridFunction::new(spec, values, None)
    }

    pub fn with_hint(mut self, ball: Ball) -> Result<Self> {
        self.support_hint = Some(ball);
        self.check_support_hint()?;
        Ok(self)
    }

    fn check_support_hint(&self) -> Result<()> {
        let Some(ball) = self.support_hint else { return Ok(()) };
        let inflated = ball.inflate(2.0 * self.spec.h);
        let cap = self.max_abs() * tol::SUPPORT_LEAK_REL;
        for k in 0..self.values.len() {
            let v = self.values[k].abs();
            if v > cap && !inflated.contains(self.spec.dim, self.spec.node(k)) {
                return Err(Error::SupportHintViolated { index: k, value: self.values[k] });
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        let cell = self.spec.cell_volume();
        self.values.iter().map(|v| v.abs()).sum::<f64>() * cell
    }

    pub fn scaled(&self, c: f64) -> Result<GridFunction> {
        let values = self.values.iter().map(|v| c * v).collect();
        GridFunction::new(self.spec, values, self.support_hint)
    }

    /// Node-wise sum; both functions must share the grid spec.
    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        if self.spec != other.spec {
            return Err(Error::Precondition("grid specs differ in add".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        let hint = match (self.support_hint, other.support_hint) {
            (Some(a), Some(b)) => {
                let d = crate::geom::dist(self.spec.dim, a.center, b.center);
                Some(Ball { center: a.center, radius: (d + b.radius).max(a.radius) })
            }
            _ => None,
        };
        GridFunction::new(self.spec, values, hint)
    }

    /// Fold `acc(x, f(x))` over all nodes of the region; returns the count of
    /// nodes visited. Regions are clamped to the index window they can touch.
    fn for_region(&self, region: Region, mut visit: impl FnMut(Point, f64)) -> usize {
        let spec = &self.spec;
        let (c, outer) = match region {
            Region::All => {
                for k in 0..self.values.len() {
                    visit(spec.node(k), self.values[k]);
                }
                return self.values.len();
            }
            Region::Ball(b) => (b.center, b.radius),
            Region::Annulus(a) => (a.center, a.outer),
        };
        let mut count = 0usize;
        let (i0, i1) = spec.axis_range(0, c[0] - outer, c[0] + outer);
        let (i0, i1) = (i0.max(0), i1.min(spec.n[0] as isize - 1));
        if spec.dim == 1 {
            for i in i0.max(0)..=i1.max(-1) {
                let x = spec.node(i as usize);
                if region.contains(1, x) {
                    visit(x, self.values[i as usize]);
                    count += 1;
                }
            }
        } else {
            let (j0, j1) = spec.axis_range(1, c[1] - outer, c[1] + outer);
            let (j0, j1) = (j0.max(0), j1.min(spec.n[1] as isize - 1));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let k = spec.flat_index(i as usize, j as usize);
                    let x = spec.node(k);
                    if region.contains(2, x) {
                        visit(x, self.values[k]);
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Midpoint quadrature of `f` over the region.
    pub fn integrate(&self, region: Region) -> Integral {
        self.integrate_map(region, |_, v| v)
    }

    /// Midpoint quadrature of `map(x, f(x))` over the region.
    pub fn integrate_map(&self, region: Region, mut map: impl FnMut(Point, f64) -> f64) -> Integral {
        let mut sum = 0.0;
        let count = self.for_region(region, |x, v| sum += map(x, v));
        Integral { value: sum * self.spec.cell_volume(), degenerate: count == 0 }
    }

    /// Weighted Lebesgue norm over the region. For finite q this is
    /// `(Int |f|^q w dx)^(1/q)`; for q = infinity it is the plain sup over
    /// region nodes (weights positive a.e. make the essential sup
    /// weight-independent).
    pub fn weighted_lq_norm(&self, omega: &Weight, q: Qexp, region: Region) -> f64 {
        match q {
            Qexp::Infinity => {
                let mut m = 0.0f64;
                self.for_region(region, |_, v| m = m.max(v.abs()));
                m
            }
            Qexp::Finite(q) => {
                if q == 1.0 {
                    self.integrate_map(region, |x, v| v.abs() * omega.eval(x)).value
                } else if q == 2.0 {
                    self.integrate_map(region, |x, v| v * v * omega.eval(x))
                        .value
                        .sqrt()
                } else {
                    self.integrate_map(region, |x, v| v.abs().powf(q) * omega.eval(x))
                        .value
                        .powf(1.0 / q)
                }
            }
        }
    }

    /// Centered moment `Int f(x) (x - x_b)^alpha dx`, |alpha| capped at 6.
    pub fn moment(&self, x_b: Point, alpha: MultiIndex) -> Result<f64> {
        if alpha.order() > 6 {
            return Err(Error::Precondition(format!(
                "moment order {} exceeds cap 6",
                alpha.order()
            )));
        }
        let dim = self.spec.dim;
        // restrict to the support hint when available
        let region = match self.support_hint {
            Some(b) => Region::Ball(b.inflate(2.0 * self.spec.h)),
            None => Region::All,
        };
        Ok(self.integrate_map(region, |x, v| v * alpha.eval(dim, x, x_b)).value)
    }
}

/// Box-average coarsening by an integer factor: each new cell takes the mean
/// of the `factor^n` old cells it covers (missing cells at the upper edge
/// read as zero). Preserves integrals exactly and smooth values to O(h^2);
/// used to measure norms of functions whose structure lives on scales far
/// above the native spacing.
pub fn box_coarsen(f: &GridFunction, factor: usize) -> Result<GridFunction> {
    if factor <= 1 {
        return Ok(f.clone());
    }
    let spec = f.spec;
    let n_new = [
        spec.n[0].div_ceil(factor).max(8),
        if spec.dim == 2 { spec.n[1].div_ceil(factor).max(8) } else { 1 },
    ];
    let h_new = spec.h * factor as f64;
    let hi = [
        spec.lo[0] + n_new[0] as f64 * h_new,
        if spec.dim == 2 { spec.lo[1] + n_new[1] as f64 * h_new } else { 0.0 },
    ];
    let new_spec = GridSpec::new(spec.dim, spec.lo, hi, h_new)?;
    let mut values = vec![0.0; new_spec.len()];
    let norm = (factor as f64).powi(spec.dim as i32);
    for (k, v) in values.iter_mut().enumerate() {
        let i0 = (k % n_new[0]) * factor;
        let j0 = (k / n_new[0]) * factor;
        let mut acc = 0.0;
        for dj in 0..(if spec.dim == 2 { factor } else { 1 }) {
            let j = j0 + dj;
            if j >= spec.n[1] && spec.dim == 2 {
                continue;
            }
            for di in 0..factor {
                let i = i0 + di;
                if i < spec.n[0] {
                    acc += f.values[j * spec.n[0] + i];
                }
            }
        }
        *v = acc / norm;
    }
    GridFunction::new(new_spec, values, f.support_hint)
}

/// Result of a scaled mollification.
pub struct Convolved {
    pub f: GridFunction,
    /// t at or below h/4: evaluated, but the kernel degenerates toward the
    /// identity on the grid
    pub sub_grid_scale: bool,
}

/// Tap vector of the truncated, discretely renormalized mollifier at scale t.
///
/// Taps are `phi_t(m h) h^n` for lattice offsets within the truncation radius
/// `R_phi * t`, rescaled so they sum to the mollifier's exact mass. The
/// rescaling keeps constants exactly reproduced at every scale (for t well
/// above h it is a no-op at machine precision by Poisson summation).
pub(crate) struct Taps {
    pub m: isize,
    /// length 2m+1 in 1D, (2m+1)^2 row-major in 2D
    pub w: Vec<f64>,
}

pub(crate) fn mollifier_taps(phi: &Mollifier, t: f64, spec: &GridSpec) -> Taps {
    let h = spec.h;
    let m = ((phi.truncation_radius() * t) / h).floor() as isize;
    let dim = spec.dim;
    let mut w;
    if dim == 1 {
        w = Vec::with_capacity((2 * m + 1) as usize);
        for k in -m..=m {
            w.push(phi.eval_scaled(t, [k as f64 * h, 0.0]) * h);
        }
    } else {
        let side = (2 * m + 1) as usize;
        w = vec![0.0; side * side];
        let rad = phi.truncation_radius() * t;
        for kj in -m..=m {
            for ki in -m..=m {
                let x = [ki as f64 * h, kj as f64 * h];
                if (x[0] * x[0] + x[1] * x[1]).sqrt() <= rad {
                    w[(kj + m) as usize * side + (ki + m) as usize] =
                        phi.eval_scaled(t, x) * h * h;
                }
            }
        }
    }
    let sum: f64 = w.iter().sum();
    if sum != 0.0 {
        let scale = phi.mass() / sum;
        for v in &mut w {
            *v *= scale;
        }
    }
    Taps { m, w }
}

/// Convolution values on an arbitrary lattice window (indices relative to the
/// grid of `values`; out-of-range input indices read as zero).
pub(crate) fn conv_lattice_1d(
    values: &[f64],
    taps: &Taps,
    out_start: isize,
    out_len: usize,
) -> Vec<f64> {
    let n = values.len() as isize;
    let m = taps.m;
    let mut out = vec![0.0; out_len];
    for (k, o) in out.iter_mut().enumerate() {
        let p = out_start + k as isize;
        let j_lo = (p - m).max(0);
        let j_hi = (p + m).min(n - 1);
        if j_lo > j_hi {
            continue;
        }
        let mut acc = 0.0;
        let base = (p + m) as usize;
        let vals = &values[j_lo as usize..=j_hi as usize];
        // taps index = p - j + m, descending as j grows
        let t_hi = base - j_lo as usize;
        for (off, v) in vals.iter().enumerate() {
            acc += v * taps.w[t_hi - off];
        }
        *o = acc;
    }
    out
}

pub(crate) fn conv_lattice_2d(
    f: &GridFunction,
    taps: &Taps,
    out_start: [isize; 2],
    out_n: [usize; 2],
) -> Vec<f64> {
    let nx = f.spec.n[0] as isize;
    let ny = f.spec.n[1] as isize;
    let m = taps.m;
    let side = (2 * m + 1) as usize;
    let mut out = vec![0.0; out_n[0] * out_n[1]];
    for oj in 0..out_n[1] {
        let pj = out_start[1] + oj as isize;
        for oi in 0..out_n[0] {
            let pi = out_start[0] + oi as isize;
            let mut acc = 0.0;
            let j_lo = (pj - m).max(0);
            let j_hi = (pj + m).min(ny - 1);
            let i_lo = (pi - m).max(0);
            let i_hi = (pi + m).min(nx - 1);
            for j in j_lo..=j_hi {
                let trow = ((pj - j + m) as usize) * side;
                let frow = (j * nx) as usize;
                for i in i_lo..=i_hi {
                    acc += f.values[frow + i as usize] * taps.w[trow + (pi - i + m) as usize];
                }
            }
            out[oj * out_n[0] + oi] = acc;
        }
    }
    out
}

/// `f * phi_t` sampled on f's grid, with `phi_t(x) = t^{-n} phi(x/t)`
/// truncated at radius `R_phi * t`.
pub fn convolve_scale(f: &GridFunction, phi: &Mollifier, t: f64) -> Result<Convolved> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Precondition(format!("scale t must lie in (0, 1], got {t}")));
    }
    let spec = f.spec;
    let taps = mollifier_taps(phi, t, &spec);
    let values = if spec.dim == 1 {
        conv_lattice_1d(&f.values, &taps, 0, spec.n[0])
    } else {
        conv_lattice_2d(f, &taps, [0, 0], spec.n)
    };
    let hint = f
        .support_hint
        .map(|b| b.inflate(phi.truncation_radius() * t));
    let g = GridFunction::new(spec, values, hint)?;
    Ok(Convolved { f: g, sub_grid_scale: t <= spec.h / 4.0 })
}
