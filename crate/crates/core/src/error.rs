use thiserror::Error;

/// Errors emitted by the numerical kernels.
///
/// Validators do not error on failed conditions (those are reported);
/// errors mark inputs the kernels cannot meaningfully process.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid bbox is not commensurate with spacing h on axis {axis}: span {span} is not an integer multiple of {h}")]
    IncommensurateGrid { axis: usize, span: f64, h: f64 },

    #[error("grid needs at least 8 nodes per axis, got {nodes} on axis {axis}")]
    GridTooCoarse { axis: usize, nodes: usize },

    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDimension(usize),

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("support hint violated: |f| = {value:e} at node {index} outside the hinted ball")]
    SupportHintViolated { index: usize, value: f64 },

    #[error("ball out of domain: {0}")]
    OutOfDomain(String),

    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),

    #[error("Gram system ill-conditioned (cond = {cond:e}); increase resolution")]
    IllConditioned { cond: f64 },

    #[error("quadrature domain too small: {0}")]
    DomainTooSmall(String),

    #[error("kernel must be validated before applying the operator")]
    UnvalidatedKernel,

    #[error("lambda = {lambda} outside the admissible interval ({lo}, {hi})")]
    InadmissibleLambda { lambda: f64, lo: f64, hi: f64 },

    #[error("molecule condition violated: {0}")]
    MoleculeConditionViolated(String),

    #[error("critical-index bisection did not converge; bracketing trace: {trace:?}")]
    NonConvergentBisection { trace: Vec<(f64, bool)> },

    #[error("operator window too small: exterior bound {bound:e} exceeds tolerance {tol:e}")]
    WindowTooSmall { bound: f64, tol: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = core::result::Result<T, Error>;
