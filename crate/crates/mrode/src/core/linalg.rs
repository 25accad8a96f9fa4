//! Dense LU factorization with partial pivoting.
//!
//! Target dimensions are desk scale (d up to ~10^3), so a plain dense
//! factorization is all that is needed. The singularity test is relative to
//! the max-norm of the input matrix.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold below which a matrix is reported singular.
pub const PIVOT_RTOL: f64 = 1e-14;

/// An LU factorization `P*A = L*U` stored in packed form.
pub struct LuFactors {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
    scale: f64,
}

/// Factor a square matrix with partial pivoting.
pub fn lu_factor(a: &DMatrix<f64>) -> Result<LuFactors> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols(), what: "lu_factor".into() });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lu[(col, col)].abs();
        for row in col + 1..n {
            let v = lu[(row, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val < PIVOT_RTOL * scale {
            return Err(Error::SingularMatrix { pivot: pivot_val, scale });
        }
        if pivot_row != col {
            lu.swap_rows(pivot_row, col);
            perm.swap(pivot_row, col);
        }
        let inv = 1.0 / lu[(col, col)];
        for row in col + 1..n {
            let factor = lu[(row, col)] * inv;
            lu[(row, col)] = factor;
            for k in col + 1..n {
                let sub = factor * lu[(col, k)];
                lu[(row, k)] -= sub;
            }
        }
    }
    Ok(LuFactors { lu, perm, scale })
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Norm estimate of the factored matrix, for diagnostics.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Solve `A x = b` from the stored factorization.
    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len(), what: "lu solve rhs".into() });
        }
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        // forward substitution (unit lower triangle)
        for i in 0..n {
            for j in 0..i {
                let s = self.lu[(i, j)] * x[j];
                x[i] -= s;
            }
        }
        // back substitution
        for i in (0..n).rev() {
            for j in i + 1..n {
                let s = self.lu[(i, j)] * x[j];
                x[i] -= s;
            }
            x[i] /= self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Solve `A X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut x = DMatrix::zeros(self.dim(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve_vec(&DVector::from_column_slice(b.column(j).as_slice()))?;
            x.set_column(j, &col);
        }
        Ok(x)
    }
}

/// One-shot solve of `A X = B` (matrix right-hand side).
pub fn lu_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    lu_factor(a)?.solve_mat(b)
}
