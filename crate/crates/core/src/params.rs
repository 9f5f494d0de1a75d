//! The exponent bundle shared by atoms, molecules, decompositions and the
//! operator pipeline, with its derived-value invariants.

use crate::error::{Error, Result};
use crate::grid::Qexp;

/// Which ball-control branch applies to a moment order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentBranch {
    /// |alpha| < gamma_p (gamma_p not attained): budget `C (|B|/w(B))^{1/p}`
    BelowGamma,
    /// |alpha| = gamma_p = s: budget `C (|B|/w(B))^beta w(B)^eta`
    AtGamma,
}

#[derive(Debug, Clone, Copy)]
pub struct HardyParams {
    pub n: usize,
    pub p: f64,
    pub q: Qexp,
    /// classical-atom moment order, >= [n (q_w / p - 1)]
    pub s0: i32,
    /// s = [gamma_p]
    pub s: i32,
    /// gamma_p = n (1/p - 1)
    pub gamma_p: f64,
    pub eta: f64,
    /// beta = eta + 1/p
    pub beta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub delta: f64,
}

impl HardyParams {
    /// Build the bundle with `s`, `gamma_p` and `beta` derived, taking the
    /// weight's critical index to floor `s0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        p: f64,
        q: Qexp,
        eta: f64,
        lambda: f64,
        mu: f64,
        delta: f64,
        q_omega: f64,
    ) -> Result<HardyParams> {
        if n != 1 && n != 2 {
            return Err(Error::BadDimension(n));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Precondition(format!("p must lie in (0, 1], got {p}")));
        }
        if let Qexp::Finite(qv) = q {
            if !(qv >= 1.0) {
                return Err(Error::Precondition(format!("q must be >= 1, got {qv}")));
            }
        }
        if !(eta > 0.0) {
            return Err(Error::Precondition(format!("eta must be positive, got {eta}")));
        }
        if !(mu > 0.0 && delta > 0.0 && delta <= 1.0) {
            return Err(Error::Precondition(format!(
                "kernel exponents need mu > 0 and delta in (0, 1], got mu = {mu}, delta = {delta}"
            )));
        }
        let nf = n as f64;
        let gamma_p = nf * (1.0 / p - 1.0);
        let s = gamma_p.floor() as i32;
        let s0_floor = (nf * (q_omega / p - 1.0)).floor() as i32;
        let s0 = s.max(s0_floor).max(0);
        let lambda_floor = match q {
            Qexp::Finite(qv) => nf * (qv / p - 1.0),
            Qexp::Infinity => f64::INFINITY,
        };
        if matches!(q, Qexp::Finite(_)) && !(lambda > lambda_floor) {
            return Err(Error::Precondition(format!(
                "lambda = {lambda} must exceed n(q/p - 1) = {lambda_floor}"
            )));
        }
        Ok(HardyParams {
            n,
            p,
            q,
            s0,
            s,
            gamma_p,
            eta,
            beta: eta + 1.0 / p,
            lambda,
            mu,
            delta,
        })
    }

    /// gamma_p attained by an integer order (the two-branch regime).
    pub fn gamma_is_integer(&self) -> bool {
        (self.gamma_p - self.gamma_p.round()).abs() < 1e-9
    }

    /// Ball-control branch for a moment of total order `ord`, or None when
    /// the order is outside the controlled range.
    pub fn moment_branch(&self, ord: u32) -> Option<MomentBranch> {
        let ord = ord as i32;
        if ord > self.s {
            return None;
        }
        if self.gamma_is_integer() {
            if ord == self.s {
                Some(MomentBranch::AtGamma)
            } else {
                Some(MomentBranch::BelowGamma)
            }
        } else {
            Some(MomentBranch::BelowGamma)
        }
    }

    /// Operator-pipeline hypothesis `min{mu, delta} > gamma_p`.
    pub fn operator_admissible(&self) -> bool {
        self.mu.min(self.delta) > self.gamma_p
    }

    /// Admissible lambda window for mapping atoms through the operator:
    /// `n(q/p - 1) < lambda < q(n + min{mu, delta}) - n`.
    pub fn lambda_window(&self) -> Result<(f64, f64)> {
        let Qexp::Finite(qv) = self.q else {
            return Err(Error::Precondition("lambda window needs finite q".into()));
        };
        let nf = self.n as f64;
        let lo = nf * (qv / self.p - 1.0);
        let hi = qv * (nf + self.mu.min(self.delta)) - nf;
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, p: f64, q: f64) -> HardyParams {
        HardyParams::new(n, p, Qexp::Finite(q), 1.0, 8.0, 1.0, 1.0, 1.0)
            .unwrap()
    }

    #[test]
    fn derived_values() {
        let hp = params(1, 1.0, 2.0);
        assert_eq!(hp.gamma_p, 0.0);
        assert_eq!(hp.s, 0);
        assert_eq!(hp.beta, 2.0);
        let hp = params(1, 0.5, 2.0);
        assert_eq!(hp.gamma_p, 1.0);
        assert_eq!(hp.s, 1);
    }

    #[test]
    fn branch_selection_over_p_ladder() {
        // gamma_p at n = 1 for p in {1, 2/3, 1/2, 1/3}: 0, 1/2, 1, 2
        let hp = params(1, 1.0, 2.0);
        assert!(hp.gamma_is_integer());
        assert_eq!(hp.moment_branch(0), Some(MomentBranch::AtGamma));

        let hp = params(1, 2.0 / 3.0, 2.0);
        assert!(!hp.gamma_is_integer());
        assert_eq!(hp.moment_branch(0), Some(MomentBranch::BelowGamma));
        assert_eq!(hp.moment_branch(1), None);

        let hp = params(1, 0.5, 2.0);
        assert!(hp.gamma_is_integer());
        assert_eq!(hp.moment_branch(0), Some(MomentBranch::BelowGamma));
        assert_eq!(hp.moment_branch(1), Some(MomentBranch::AtGamma));

        let hp = HardyParams::new(1, 1.0 / 3.0, Qexp::Finite(2.0), 1.0, 16.0, 1.0, 1.0, 1.0)
            .unwrap();
        assert_eq!(hp.gamma_p, 2.0);
        assert_eq!(hp.moment_branch(2), Some(MomentBranch::AtGamma));
    }

    #[test]
    fn lambda_hypothesis_enforced() {
        assert!(HardyParams::new(1, 1.0, Qexp::Finite(2.0), 1.0, 0.5, 1.0, 1.0, 1.0).is_err());
        let hp = params(1, 1.0, 2.0);
        let (lo, hi) = hp.lambda_window().unwrap();
        assert_eq!(lo, 1.0);
        assert_eq!(hi, 3.0);
        assert!(hp.operator_admissible());
    }
}
