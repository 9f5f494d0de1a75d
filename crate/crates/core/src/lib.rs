//! Grid-based numerics for weighted local Hardy spaces.
//!
//! The crate provides a desk-scale laboratory for the constructive side of
//! weighted local Hardy space theory on R^n, n in {1, 2}:
//!
//! * [`grid`] — uniform cell-centered grids, midpoint quadrature, weighted
//!   Lebesgue norms, centered moments and scaled mollification;
//! * [`weights`] — Muckenhoupt weight families, empirical A_q constants,
//!   critical-index bracketing and doubling profiles;
//! * [`hardy`] — mollifiers, the local grand maximal function over a dyadic
//!   scale ladder and the h^p_w quasi-norm;
//! * [`atoms`] — construction and validation of atoms, approximate atoms
//!   with ball-control moment conditions and approximate molecules;
//! * [`decompose`] — the explicit annular decomposition of a molecule into
//!   atoms plus one approximate atom, with reconstruction diagnostics;
//! * [`czop`] — discretized inhomogeneous singular integral kernels, kernel
//!   condition validation, the adjoint moment condition and the
//!   atom-to-molecule operator pipeline.
//!
//! Everything is deterministic given a seed: generators draw from a
//! counter-based RNG and all reductions run in a fixed order.

// negated comparisons like `!(x > 0.0)` are NaN-rejecting guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atoms;
pub mod czop;
pub mod decompose;
pub mod error;
pub mod geom;
pub mod grid;
pub mod hardy;
mod linalg;
pub mod params;
pub mod tol;
pub mod weights;

pub use error::{Error, Result};
pub use geom::{Annulus, Ball, MultiIndex, Point, Region};
pub use grid::{box_coarsen, convolve_scale, GridFunction, GridSpec, Qexp};
pub use hardy::{atomic_norm_upper, hp_norm, local_maximal, HpNorm, Mollifier, ScaleGrid};
pub use params::{HardyParams, MomentBranch};
pub use weights::{Weight, WeightReport};
