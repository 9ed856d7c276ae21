//! Dense LU solver for the reduced conductance matrix.
//!
//! The ladder never has more than 64 unknowns (2N nodes, N <= 32), so a
//! dense Gaussian elimination with partial pivoting is both simple and fast.
//! Factorizations are cached per diode-state pattern by the stepper, which
//! is why factor and solve are split.

use crate::error::{Error, Result};

/// Pivots smaller than this are treated as structural singularities. The
/// smallest legitimate diagonal entry is a node held only by a diode
/// off-conductance (~1e-9 S), orders of magnitude above this floor.
const PIVOT_FLOOR: f64 = 1e-30;

/// Compact LU factorization with row-pivot record.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    /// Row-major combined L (unit lower, below diagonal) and U factors.
    lu: Vec<f64>,
    /// `pivots[k]` is the row swapped into position k at step k.
    pivots: Vec<usize>,
}

/// Factor a row-major `n x n` matrix in place.
pub fn factor(mut a: Vec<f64>, n: usize) -> Result<LuFactors> {
    debug_assert_eq!(a.len(), n * n);
    let mut pivots = vec![0usize; n];
    for k in 0..n {
        // Partial pivot: largest magnitude in column k at or below row k.
        let mut p = k;
        let mut best = a[k * n + k].abs();
        for i in (k + 1)..n {
            let v = a[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best < PIVOT_FLOOR {
            return Err(Error::SingularMatrix { step: k, pivot: best });
        }
        pivots[k] = p;
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
        }
        let diag = a[k * n + k];
        for i in (k + 1)..n {
            let factor = a[i * n + k] / diag;
            a[i * n + k] = factor;
            if factor != 0.0 {
                for j in (k + 1)..n {
                    a[i * n + j] -= factor * a[k * n + j];
                }
            }
        }
    }
    Ok(LuFactors { n, lu: a, pivots })
}

impl LuFactors {
    /// Solve `A x = b`, writing the solution over `b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.pivots[k]);
        }
        // Forward substitution with unit lower factor.
        for i in 1..n {
            let mut sum = b[i];
            for j in 0..i {
                sum -= self.lu[i * n + j] * b[j];
            }
            b[i] = sum;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut sum = b[i];
            for j in (i + 1)..n {
                sum -= self.lu[i * n + j] * b[j];
            }
            b[i] = sum / self.lu[i * n + i];
        }
    }
}
