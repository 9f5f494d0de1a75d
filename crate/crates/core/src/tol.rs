//! Central tolerance constants used by validators and internal consistency
//! checks. Everything resolution-dependent is expressed through these so the
//! budgets are auditable in one place.

/// Relative tolerance for quantities that are exact in f64 arithmetic up to
/// accumulation over one pass (sums, scalings).
pub const EXACT_REL: f64 = 1e-12;

/// Relative tolerance for quantities exact up to a handful of compositions
/// (norm ratios, budget rescalings).
pub const SCALING_REL: f64 = 1e-9;

/// Residual tolerance for dual-basis biorthogonality after the Gram solve.
pub const BIORTHO_RESIDUAL: f64 = 1e-8;

/// Condition-number gate for the small moment Gram systems.
pub const GRAM_COND_MAX: f64 = 1e10;

/// Coefficient `c` in the moment-vanishing budget `c * h^2 * ||a||_1`.
///
/// Generated atoms have discrete moments at solver precision (~1e-14), while
/// sampled continuum atoms carry midpoint-rule error of order h^2; the factor
/// leaves headroom for the h -> h/2 refinement checks.
pub const MOMENT_BUDGET_COEFF: f64 = 4.0;

/// Relative support-leak tolerance for the (A1) check: values outside the
/// inflated ball must be below this fraction of the max amplitude.
pub const SUPPORT_LEAK_REL: f64 = 1e-12;

/// Slack multiplier applied to validator budgets to absorb quadrature noise
/// when a construction is tuned to sit exactly on its budget.
pub const BUDGET_SLACK: f64 = 1e-9;

/// Agreement tolerance between closed-form and quadrature ball measures.
pub const MEASURE_CROSSCHECK_REL: f64 = 1e-3;

/// Mollifier truncation: the discarded tail mass must stay below this.
pub const MOLLIFIER_TAIL_MASS: f64 = 1e-10;
