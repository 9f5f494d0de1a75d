//! Balls, annuli, regions and multi-indices on R^n for n in {1, 2}.
//!
//! Points are stored as `[f64; 2]`; in dimension 1 the second coordinate is
//! zero and ignored by all distance computations.

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub fn dist(dim: usize, a: Point, b: Point) -> f64 {
    match dim {
        1 => (a[0] - b[0]).abs(),
        _ => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
    }
}

/// Open ball B(x_B, r) = { x : |x - x_B| < r }.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Precondition(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Ball { center, radius })
    }

    pub fn contains(&self, dim: usize, x: Point) -> bool {
        dist(dim, self.center, x) < self.radius
    }

    /// Same center, radius scaled by `factor`.
    pub fn dilate(&self, factor: f64) -> Ball {
        Ball { center: self.center, radius: self.radius * factor }
    }

    pub fn inflate(&self, extra: f64) -> Ball {
        Ball { center: self.center, radius: self.radius + extra }
    }

    /// Lebesgue measure |B|.
    pub fn volume(&self, dim: usize) -> f64 {
        match dim {
            1 => 2.0 * self.radius,
            _ => core::f64::consts::PI * self.radius * self.radius,
        }
    }
}

/// Half-open annulus { x : inner <= |x - center| < outer }.
///
/// With inner = 0 this degenerates to the ball of radius `outer`, which keeps
/// dyadic shells an exact partition of their enclosing ball on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annulus {
    pub center: Point,
    pub inner: f64,
    pub outer: f64,
}

impl Annulus {
    pub fn new(center: Point, inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
            return Err(Error::Precondition(format!(
                "annulus radii must satisfy 0 <= inner < outer, got [{inner}, {outer})"
            )));
        }
        Ok(Annulus { center, inner, outer })
    }

    pub fn contains(&self, dim: usize, x: Point) -> bool {
        let d = dist(dim, self.center, x);
        self.inner <= d && d < self.outer
    }

    pub fn volume(&self, dim: usize) -> f64 {
        match dim {
            1 => 2.0 * (self.outer - self.inner),
            _ => core::f64::consts::PI * (self.outer * self.outer - self.inner * self.inner),
        }
    }
}

/// Integration region selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    All,
    Ball(Ball),
    Annulus(Annulus),
}

impl Region {
    pub fn contains(&self, dim: usize, x: Point) -> bool {
        match self {
            Region::All => true,
            Region::Ball(b) => b.contains(dim, x),
            Region::Annulus(a) => a.contains(dim, x),
        }
    }
}

/// Multi-index alpha = (a1, a2); in dimension 1 the second entry is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub [u32; 2]);

impl MultiIndex {
    pub fn order(&self) -> u32 {
        self.0[0] + self.0[1]
    }

    /// (x - c)^alpha.
    pub fn eval(&self, dim: usize, x: Point, c: Point) -> f64 {
        let mut v = powi(x[0] - c[0], self.0[0]);
        if dim == 2 {
            v *= powi(x[1] - c[1], self.0[1]);
        }
        v
    }
}

impl core::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "({},{})", self.0[0], self.0[1])
    }
}

fn powi(base: f64, exp: u32) -> f64 {
    let mut v = 1.0;
    for _ in 0..exp {
        v *= base;
    }
    v
}

/// All multi-indices with |alpha| <= max_order, sorted by (order, lexicographic).
/// The fixed ordering keeps every downstream sweep deterministic.
pub fn multi_indices(dim: usize, max_order: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for total in 0..=max_order {
        if dim == 1 {
            out.push(MultiIndex([total, 0]));
        } else {
            for a0 in (0..=total).rev() {
                out.push(MultiIndex([a0, total - a0]));
            }
        }
    }
    out
}
