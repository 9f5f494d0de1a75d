//! Dense solves for the small symmetric positive-definite Gram systems that
//! back dual polynomials, moment projections and generator tuning. Systems
//! are at most 10x10, so a plain Cholesky factorization is enough; the
//! condition number is estimated from the explicit inverse and gated by the
//! caller.

use crate::error::{Error, Result};
use crate::tol;

/// Row-major dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }
}

pub struct Cholesky {
    n: usize,
    // lower-triangular factor, row-major
    l: Vec<f64>,
    /// 1-norm condition number estimate of the original matrix.
    pub cond: f64,
}

impl Cholesky {
    /// Factor an SPD matrix. Fails if a pivot is non-positive (matrix not
    /// numerically SPD) or the condition estimate exceeds the gate.
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let n = a.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::IllConditioned { cond: f64::INFINITY });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        let mut chol = Cholesky { n, l, cond: 0.0 };
        chol.cond = chol.estimate_cond(a);
        if chol.cond > tol::GRAM_COND_MAX {
            return Err(Error::IllConditioned { cond: chol.cond });
        }
        Ok(chol)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        // forward substitution L y = b
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        // back substitution L^T x = y
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    fn estimate_cond(&self, a: &SymMatrix) -> f64 {
        let n = self.n;
        let norm1 = |m: &dyn Fn(usize, usize) -> f64| -> f64 {
            (0..n)
                .map(|j| (0..n).map(|i| m(i, j).abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let a_norm = norm1(&|i, j| a.get(i, j));
        // columns of the inverse via n solves; n <= 10 so this is cheap
        let mut inv_cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            inv_cols.push(self.solve(&e));
        }
        let inv_norm = norm1(&|i, j| inv_cols[j][i]);
        a_norm * inv_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let mut a = SymMatrix::zeros(2);
        a.set(0, 0, 4.0);
        a.set(0, 1, 1.0);
        a.set(1, 1, 3.0);
        let ch = Cholesky::new(&a).unwrap();
        let x = ch.solve(&[1.0, 2.0]);
        // residual check
        let r0 = 4.0 * x[0] + 1.0 * x[1] - 1.0;
        let r1 = 1.0 * x[0] + 3.0 * x[1] - 2.0;
        assert!(r0.abs() < 1e-14 && r1.abs() < 1e-14);
        assert!(ch.cond < 10.0);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let mut a = SymMatrix::zeros(2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 1, 1.0);
        assert!(Cholesky::new(&a).is_err());
    }
}
