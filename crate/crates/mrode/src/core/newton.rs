//! Newton iteration for the implicit stage equations.
//!
//! Stage systems are small and get re-solved many times with the same matrix,
//! so the default is a simplified Newton that factors the Jacobian once and
//! reuses it. The Jacobian may be supplied or formed by central differences
//! with step `sqrt(eps) * (1 + |y_i|)`.

use crate::core::linalg::lu_factor;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonMode {
    /// Factor the Jacobian once at the initial guess and reuse it.
    Simplified,
    /// Re-evaluate and re-factor the Jacobian every iteration.
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub mode: NewtonMode,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-10, max_iters: 25, mode: NewtonMode::Simplified }
    }
}

impl NewtonConfig {
    pub fn tight() -> Self {
        NewtonConfig { tol: 1e-13, max_iters: 50, mode: NewtonMode::Full }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Central-difference Jacobian of `residual` at `x`.
pub fn fd_jacobian(residual: &dyn Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let m = residual(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let sqrt_eps = f64::EPSILON.sqrt();
    for j in 0..n {
        let step = sqrt_eps * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let fp = residual(&xp);
        let fm = residual(&xm);
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Solve `residual(x) = 0` starting from `guess`.
///
/// `jac` supplies the Jacobian of the residual; pass `None` to fall back to
/// central finite differences. Non-convergence reports the last residual
/// norm together with `context` so the failing stage can be identified.
pub fn newton_solve(
    residual: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    guess: &DVector<f64>,
    jac: Option<&dyn Fn(&DVector<f64>) -> DMatrix<f64>>,
    config: NewtonConfig,
    context: &str,
) -> Result<NewtonOutcome> {
    let jac_at = |x: &DVector<f64>| -> DMatrix<f64> {
        match jac {
            Some(j) => j(x),
            None => fd_jacobian(residual, x),
        }
    };

    let mut x = guess.clone();
    let mut r = residual(&x);
    if r.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: r.len(), what: "newton residual".into() });
    }
    let mut rnorm = r.norm();
    if rnorm <= config.tol {
        return Ok(NewtonOutcome { solution: x, iterations: 0, residual_norm: rnorm });
    }

    let mut factors = lu_factor(&jac_at(&x))?;
    for iter in 1..=config.max_iters {
        let dx = factors.solve_vec(&r)?;
        x -= &dx;
        r = residual(&x);
        rnorm = r.norm();
        if rnorm <= config.tol {
            return Ok(NewtonOutcome { solution: x, iterations: iter, residual_norm: rnorm });
        }
        if config.mode == NewtonMode::Full {
            factors = lu_factor(&jac_at(&x))?;
        }
    }
    // one refresh before giving up in simplified mode
    if config.mode == NewtonMode::Simplified {
        factors = lu_factor(&jac_at(&x))?;
        for iter in 1..=config.max_iters {
            let dx = factors.solve_vec(&r)?;
            x -= &dx;
            r = residual(&x);
            rnorm = r.norm();
            if rnorm <= config.tol {
                return Ok(NewtonOutcome {
                    solution: x,
                    iterations: config.max_iters + iter,
                    residual_norm: rnorm,
                });
            }
        }
    }
    Err(Error::NewtonFailure {
        residual: rnorm,
        tol: config.tol,
        iters: config.max_iters,
        context: context.into(),
    })
}
