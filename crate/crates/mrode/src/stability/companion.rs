//! Companion one-step maps of multirate linear multistep methods.
//!
//! The map acts on the stacked history (coarse slow values and `f` values,
//! fine fast values and modified `f` values). Rather than transcribing the
//! update formulas a second time, the matrix is extracted from the
//! production stepping code by propagating unit basis histories. Complex
//! step-scaled rates are handled through the standard real embedding
//! `a + ib -> [[a, -b], [b, a]]`, whose companion spectrum is the complex
//! spectrum together with its conjugate, so spectral radii are unchanged.

use crate::core::newton::{NewtonConfig, NewtonMode};
use crate::core::ode::{JacobianBlocks, PartitionedOde};
use crate::error::Result;
use crate::lmm_mr::{mrlmm_step, HistoryWindow, LmmOptions, LmmScheme, LmmStrategy};
use crate::stability::transfer::ZQuad;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn embed(z: Complex64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[z.re, -z.im, z.im, z.re])
}

/// Real 2+2 dimensional linear system whose complex reduction is the scalar
/// test problem with the given step-scaled rates (macro-step one).
fn embedded_system(z: &ZQuad) -> PartitionedOde {
    let (ss, fs, sf, ff) = (embed(z.z_ss), embed(z.z_fs), embed(z.z_sf), embed(z.z_ff));
    let (ss2, fs2, sf2, ff2) = (ss.clone(), fs.clone(), sf.clone(), ff.clone());
    let sys = PartitionedOde::new(
        2,
        2,
        Box::new(move |ys, yf, _| &ss * ys + &fs * yf),
        Box::new(move |ys, yf, _| &sf2 * ys + &ff2 * yf),
    );
    let (jss, jsf_b, jfs_b, jff) = (ss2, fs2, sf, ff);
    sys.with_jacobians(JacobianBlocks {
        slow_slow: Box::new(move |_, _, _| jss.clone()),
        slow_fast: Box::new(move |_, _, _| jsf_b.clone()),
        fast_slow: Box::new(move |_, _, _| jfs_b.clone()),
        fast_fast: Box::new(move |_, _, _| jff.clone()),
    })
}

fn history_dim(k: usize, m: usize) -> usize {
    let fine = HistoryWindow::fine_len(k, m);
    2 * (2 * k) + 2 * (2 * fine)
}

fn empty_history(k: usize, m: usize) -> HistoryWindow {
    let fine = HistoryWindow::fine_len(k, m);
    HistoryWindow {
        k,
        m,
        h_macro: 1.0,
        t_n: 0.0,
        slow: vec![DVector::zeros(2); k],
        slow_rhs: vec![DVector::zeros(2); k],
        fast: vec![DVector::zeros(2); fine],
        fast_rhs: vec![DVector::zeros(2); fine],
    }
}

fn write_history(hist: &mut HistoryWindow, x: &DVector<f64>) {
    let mut idx = 0;
    for v in hist.slow.iter_mut().chain(hist.slow_rhs.iter_mut()) {
        v[0] = x[idx];
        v[1] = x[idx + 1];
        idx += 2;
    }
    for v in hist.fast.iter_mut().chain(hist.fast_rhs.iter_mut()) {
        v[0] = x[idx];
        v[1] = x[idx + 1];
        idx += 2;
    }
}

fn read_history(hist: &HistoryWindow) -> DVector<f64> {
    let mut out = DVector::zeros(history_dim(hist.k, hist.m));
    let mut idx = 0;
    for v in hist.slow.iter().chain(hist.slow_rhs.iter()) {
        out[idx] = v[0];
        out[idx + 1] = v[1];
        idx += 2;
    }
    for v in hist.fast.iter().chain(hist.fast_rhs.iter()) {
        out[idx] = v[0];
        out[idx + 1] = v[1];
        idx += 2;
    }
    out
}

/// One-step companion matrix of the multirate LMM on the (embedded) linear
/// test problem with unit macro-step.
pub fn mrlmm_companion(
    scheme: &LmmScheme,
    strategy: LmmStrategy,
    m: usize,
    z: &ZQuad,
    opts: LmmOptions,
) -> Result<DMatrix<f64>> {
    let sys = embedded_system(z);
    let k = scheme.steps;
    let n = history_dim(k, m);
    let cfg = NewtonConfig { tol: 1e-12, max_iters: 50, mode: NewtonMode::Full };
    let mut t = DMatrix::zeros(n, n);
    let mut hist = empty_history(k, m);
    for col in 0..n {
        let mut x = DVector::zeros(n);
        x[col] = 1.0;
        write_history(&mut hist, &x);
        let stepped = mrlmm_step(scheme, strategy, &sys, &hist, cfg, opts)?;
        t.set_column(col, &read_history(&stepped));
    }
    Ok(t)
}

/// Spectral radius of the companion map at the given rates.
pub fn mrlmm_spectral_radius(
    scheme: &LmmScheme,
    strategy: LmmStrategy,
    m: usize,
    z: &ZQuad,
    opts: LmmOptions,
) -> Result<f64> {
    let t = mrlmm_companion(scheme, strategy, m, z, opts)?;
    let eigs = t
        .map(|v| Complex64::new(v, 0.0))
        .eigenvalues()
        .ok_or_else(|| crate::error::Error::InvalidConfig("companion eigensolve failed".into()))?;
    Ok(eigs.iter().map(|e| e.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::routh::spectral_radius;

    /// Companion of the single-rate scheme on `y' = z y` over one step.
    fn single_rate_companion(scheme: &LmmScheme, z: Complex64) -> DMatrix<Complex64> {
        // state (y_n, h f_n, y_{n-1}, h f_{n-1}, ...)
        let k = scheme.steps;
        let n = 2 * k;
        let mut t = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        // y_{n+1} = sum_{r>=1} (-alpha_r y_{n+1-r} + beta_r (h f_{n+1-r})) + beta_0 h f_{n+1},
        // h f_{n+1} = z y_{n+1}
        let denom = Complex64::new(1.0, 0.0) - z * scheme.beta[0];
        for r in 1..=k {
            t[(0, 2 * (r - 1))] += -scheme.alpha[r] / denom;
            t[(0, 2 * (r - 1) + 1)] += scheme.beta[r] / denom;
        }
        for col in 0..n {
            t[(1, col)] = z * t[(0, col)];
        }
        for r in 1..k {
            t[(2 * r, 2 * (r - 1))] = Complex64::new(1.0, 0.0);
            t[(2 * r + 1, 2 * (r - 1) + 1)] = Complex64::new(1.0, 0.0);
        }
        t
    }

    #[test]
    fn decoupled_map_factorizes_into_base_companions() {
        // no coupling: spectral radius equals the max of the slow companion
        // at z_ss and the fast companion at z_ff/m composed m times
        let scheme = LmmScheme::bdf(2).unwrap();
        let z = ZQuad {
            z_ss: Complex64::new(-1.3, 0.7),
            z_ff: Complex64::new(-6.0, -2.0),
            z_fs: Complex64::new(0.0, 0.0),
            z_sf: Complex64::new(0.0, 0.0),
        };
        let m = 3usize;
        let rho = mrlmm_spectral_radius(&scheme, LmmStrategy::ImplicitDecoupledSlowest, m, &z, LmmOptions::default()).unwrap();
        let slow_rho = spectral_radius(&single_rate_companion(&scheme, z.z_ss));
        let fast_map = single_rate_companion(&scheme, z.z_ff / m as f64);
        let fast_pow = &fast_map * &fast_map * &fast_map;
        let fast_rho_per_macro = spectral_radius(&fast_pow);
        let expect = slow_rho.max(fast_rho_per_macro.powf(1.0 / 1.0));
        // companion spectral radius per macro-step: fast block contributes
        // rho(M^m); slow block rho(M)
        assert!(
            (rho - expect).abs() < 1e-8,
            "rho {rho} vs slow {slow_rho} / fast {fast_rho_per_macro}"
        );
    }

    #[test]
    fn example_companion_matches_bdf2_closed_form() {
        // decoupled slow block of BDF2: roots of (1 - 2/3 z) w^2 - 4/3 w + 1/3
        let scheme = LmmScheme::bdf(2).unwrap();
        let z = Complex64::new(-2.0, 1.0);
        let t = single_rate_companion(&scheme, z);
        let rho = spectral_radius(&t);
        let a = Complex64::new(1.0, 0.0) - z * (2.0 / 3.0);
        let disc = (Complex64::new(16.0 / 9.0, 0.0) - a * (4.0 / 3.0)).sqrt();
        let r1 = ((Complex64::new(4.0 / 3.0, 0.0) + disc) / (a * 2.0)).norm();
        let r2 = ((Complex64::new(4.0 / 3.0, 0.0) - disc) / (a * 2.0)).norm();
        assert!((rho - r1.max(r2)).abs() < 1e-9);
    }
}
