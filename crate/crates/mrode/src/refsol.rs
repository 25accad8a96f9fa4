//! Single-rate reference integrators.
//!
//! Convergence studies need an order-independent oracle. Problems without an
//! analytic solution are solved by an embedded Dormand-Prince 5(4) pair at a
//! tight tolerance; fixed-step RK4 is also provided for bootstrap and inner
//! solves.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// Classical RK4 with `n_steps` equal steps over `[t0, t1]`.
pub fn rk4_fixed(
    f: &dyn Fn(&DVector<f64>, f64) -> DVector<f64>,
    y0: &DVector<f64>,
    t0: f64,
    t1: f64,
    n_steps: usize,
) -> DVector<f64> {
    let h = (t1 - t0) / n_steps as f64;
    let mut y = y0.clone();
    let mut t = t0;
    for _ in 0..n_steps {
        let k1 = f(&y, t);
        let k2 = f(&(&y + &k1 * (h / 2.0)), t + h / 2.0);
        let k3 = f(&(&y + &k2 * (h / 2.0)), t + h / 2.0);
        let k4 = f(&(&y + &k3 * h), t + h);
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
    }
    y
}

// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince 5(4) solve to relative/absolute tolerance `tol`.
pub fn dopri5(
    f: &dyn Fn(&DVector<f64>, f64) -> DVector<f64>,
    y0: &DVector<f64>,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    let dim = y0.len();
    let mut y = y0.clone();
    let mut t = t0;
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y);
    }
    let dir = span.signum();
    let mut h = (span.abs() / 100.0).min(0.1).max(1e-8) * dir;
    let h_min = span.abs() * 1e-14;
    let max_steps = 50_000_000usize;

    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(dim); 7];
    for _ in 0..max_steps {
        if (t - t1).abs() <= 1e-15 * span.abs() {
            return Ok(y);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        for i in 0..7 {
            let mut arg = y.clone();
            for (j, kj) in k.iter().enumerate().take(i) {
                if DP_A[i][j] != 0.0 {
                    arg += kj * (DP_A[i][j] * h);
                }
            }
            k[i] = f(&arg, t + DP_C[i] * h);
        }
        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for i in 0..7 {
            if DP_B5[i] != 0.0 {
                y5 += &k[i] * (DP_B5[i] * h);
            }
            if DP_B4[i] != 0.0 {
                y4 += &k[i] * (DP_B4[i] * h);
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..dim {
            let sc = tol + tol * y[i].abs().max(y5[i].abs());
            err += ((y5[i] - y4[i]) / sc).powi(2);
        }
        err = (err / dim as f64).sqrt();
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        if h.abs() < h_min {
            return Err(Error::StepSizeUnderflow { t, h: h.abs(), h_min });
        }
    }
    Err(Error::InnerSolveFailure("dopri5 exceeded the step budget".into()))
}
