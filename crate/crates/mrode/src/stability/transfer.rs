//! One-step transfer matrices of the multirate families on the 2x2 linear
//! test problem.
//!
//! Everything here works over complex step-scaled rates so the same code
//! serves both real random-problem checks and the polar-grid region scans.
//! All returned matrices are ordered `(slow, fast)`.

use crate::euler_mr::{EulerCoupling, EulerMode, Interpolation};
use crate::problems::TestProblem2x2;
use crate::tableaux::GarkTableau;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

type C = Complex64;

/// The four step-scaled rates `z = H * lambda`.
#[derive(Debug, Clone, Copy)]
pub struct ZQuad {
    pub z_ss: C,
    pub z_ff: C,
    /// Fast-into-slow coupling (multiplies `y_fast` in the slow equation).
    pub z_fs: C,
    /// Slow-into-fast coupling (multiplies `y_slow` in the fast equation).
    pub z_sf: C,
}

impl ZQuad {
    pub fn from_test_problem(p: &TestProblem2x2, h: f64) -> Self {
        ZQuad {
            z_ss: C::new(h * p.lambda_ss, 0.0),
            z_ff: C::new(h * p.lambda_ff, 0.0),
            z_fs: C::new(h * p.lambda_fs, 0.0),
            z_sf: C::new(h * p.lambda_sf, 0.0),
        }
    }

    /// Polar-grid parameterization used by the region scans:
    /// `z_ss = exp(i theta_s)`, `z_ff = m exp(i theta_f)`, couplings chosen
    /// so the test-system eigenvalues are convex combinations of the
    /// diagonal rates (weight `xi`, fast-variable scaling `alpha`).
    pub fn from_polar(theta_f: f64, theta_s: f64, m: usize, xi: f64, alpha: f64) -> Self {
        let z_ff = C::from_polar(m as f64, theta_f);
        let z_ss = C::from_polar(1.0, theta_s);
        let diff = z_ff - z_ss;
        ZQuad {
            z_ss,
            z_ff,
            z_sf: diff * ((1.0 - xi) / alpha),
            z_fs: diff * (-alpha * xi),
        }
    }

    /// Coupling coefficient `k = z_fs z_sf / (z_ff z_ss)`.
    pub fn coupling_coefficient(&self) -> C {
        self.z_fs * self.z_sf / (self.z_ff * self.z_ss)
    }
}

/// Stability factors of the base Euler schemes over one macro-step.
pub fn fe_slow_factor(z: &ZQuad) -> C {
    C::new(1.0, 0.0) + z.z_ss
}

pub fn fe_fast_factor(z: &ZQuad, m: usize) -> C {
    (C::new(1.0, 0.0) + z.z_ff / m as f64).powu(m as u32)
}

pub fn be_slow_factor(z: &ZQuad) -> C {
    (C::new(1.0, 0.0) - z.z_ss).inv()
}

pub fn be_fast_factor(z: &ZQuad, m: usize) -> C {
    (C::new(1.0, 0.0) - z.z_ff / m as f64).powu(m as u32).inv()
}

fn two_by_two(e00: C, e01: C, e10: C, e11: C) -> DMatrix<C> {
    DMatrix::from_row_slice(2, 2, &[e00, e01, e10, e11])
}

/// Symbolic state of the backward micro sweep: the fast value as an affine
/// function `const_part + kappa * row_slow` of the (possibly still unknown)
/// slow endpoint row.
struct FastRow {
    const_part: [C; 2],
    kappa: C,
}

/// Run `m - first_micro` backward Euler micro-steps symbolically.
fn be_micro_sweep(z: &ZQuad, m: usize, first_micro: usize, start: FastRow, interpolation: Interpolation) -> FastRow {
    let one = C::new(1.0, 0.0);
    let a_inv = one - z.z_ff / m as f64;
    let mut v = start;
    for ell in first_micro..m {
        let frac = (ell + 1) as f64 / m as f64;
        // slow value row at the micro time as alpha * e_s + beta * row_slow
        let (alpha, beta) = match interpolation {
            Interpolation::ConstantAtTn => (one, C::new(0.0, 0.0)),
            Interpolation::ConstantAtTn1 => (C::new(0.0, 0.0), one),
            Interpolation::Linear => (C::new(1.0 - frac, 0.0), C::new(frac, 0.0)),
        };
        let forcing = z.z_sf / m as f64;
        v = FastRow {
            const_part: [(v.const_part[0] + forcing * alpha) / a_inv, v.const_part[1] / a_inv],
            kappa: (v.kappa + forcing * beta) / a_inv,
        };
    }
    v
}

/// Transfer matrix of one multirate Euler step on the linear test problem.
pub fn euler_transfer(coupling: EulerCoupling, z: &ZQuad, m: usize) -> DMatrix<C> {
    let one = C::new(1.0, 0.0);
    let zero = C::new(0.0, 0.0);
    match coupling.mode {
        EulerMode::FeConstant | EulerMode::FeLinearInterp | EulerMode::FeLinearExtrap => {
            let row_s = [one + z.z_ss, z.z_fs];
            let mut v = [zero, one];
            let a = one + z.z_ff / m as f64;
            for ell in 0..m {
                let frac = ell as f64 / m as f64;
                let w = if coupling.mode == EulerMode::FeConstant {
                    [one, zero]
                } else {
                    [one * (1.0 - frac) + row_s[0] * frac, row_s[1] * frac]
                };
                v = [
                    a * v[0] + (z.z_sf / m as f64) * w[0],
                    a * v[1] + (z.z_sf / m as f64) * w[1],
                ];
            }
            two_by_two(row_s[0], row_s[1], v[0], v[1])
        }
        EulerMode::BeDecoupledSlowest => {
            let d = one - z.z_ss;
            let row_s = [one / d, z.z_fs / d];
            let v = be_micro_sweep(
                z,
                m,
                0,
                FastRow { const_part: [zero, one], kappa: zero },
                coupling.interpolation,
            );
            two_by_two(
                row_s[0],
                row_s[1],
                v.const_part[0] + v.kappa * row_s[0],
                v.const_part[1] + v.kappa * row_s[1],
            )
        }
        EulerMode::BeDecoupledFastest => {
            let v = be_micro_sweep(
                z,
                m,
                0,
                FastRow { const_part: [zero, one], kappa: zero },
                Interpolation::ConstantAtTn,
            );
            let fast_row = v.const_part; // kappa is zero: no dependence on the new slow value
            let d = one - z.z_ss;
            let row_s = [(one + z.z_fs * fast_row[0]) / d, (z.z_fs * fast_row[1]) / d];
            two_by_two(row_s[0], row_s[1], fast_row[0], fast_row[1])
        }
        EulerMode::BeCoupledSlowest => {
            // joint macro solve for (slow, predicted fast); prediction discarded
            let det = (one - z.z_ss) * (one - z.z_ff) - z.z_sf * z.z_fs;
            let row_s = [(one - z.z_ff) / det, z.z_fs / det];
            let v = be_micro_sweep(
                z,
                m,
                0,
                FastRow { const_part: [zero, one], kappa: zero },
                coupling.interpolation,
            );
            two_by_two(
                row_s[0],
                row_s[1],
                v.const_part[0] + v.kappa * row_s[0],
                v.const_part[1] + v.kappa * row_s[1],
            )
        }
        EulerMode::BeCoupledFirstStep => {
            // joint solve of slow with the first micro-step
            let det = (one - z.z_ss) * (one - z.z_ff / m as f64) - z.z_sf / m as f64 * z.z_fs;
            let row_s = [(one - z.z_ff / m as f64) / det, z.z_fs / det];
            let first = [
                (z.z_sf / m as f64) / det,
                (one - z.z_ss) / det,
            ];
            let v = be_micro_sweep(
                z,
                m,
                1,
                FastRow { const_part: first, kappa: zero },
                Interpolation::ConstantAtTn1,
            );
            two_by_two(
                row_s[0],
                row_s[1],
                v.const_part[0] + v.kappa * row_s[0],
                v.const_part[1] + v.kappa * row_s[1],
            )
        }
        EulerMode::BeFullyCoupled => {
            // slow equation sees the final micro value, which depends on the
            // slow endpoint through the interpolation: eliminate symbolically
            let v = be_micro_sweep(
                z,
                m,
                0,
                FastRow { const_part: [zero, one], kappa: zero },
                coupling.interpolation,
            );
            let d = one - z.z_ss - z.z_fs * v.kappa;
            let row_s = [
                (one + z.z_fs * v.const_part[0]) / d,
                (z.z_fs * v.const_part[1]) / d,
            ];
            two_by_two(
                row_s[0],
                row_s[1],
                v.const_part[0] + v.kappa * row_s[0],
                v.const_part[1] + v.kappa * row_s[1],
            )
        }
    }
}

/// Closed-form admissible coupling interval of the forward method with
/// constant interpolation: stability holds for `k` strictly inside
/// `((Rs Rf - 1) / ((1-Rs)(1-Rf)), (1+Rs)(1+Rf) / ((1-Rs)(1-Rf)))`
/// intersected with `(-inf, 1)`. Errors on the degenerate `R = 1` case.
pub fn mrfe_stability_interval(r_s: f64, r_f: f64) -> crate::error::Result<(f64, f64)> {
    let denom = (1.0 - r_s) * (1.0 - r_f);
    if denom.abs() < 1e-14 {
        return Err(crate::error::Error::BadParameter(
            "base factor equal to one: admissible interval undefined".into(),
        ));
    }
    let lo = (r_s * r_f - 1.0) / denom;
    let hi = ((1.0 + r_s) * (1.0 + r_f) / denom).min(1.0);
    Ok((lo, hi))
}

/// MRFE transfer matrix entries from `(R_s, R_f, k)` alone; trace and
/// determinant determine the spectrum.
pub fn mrfe_tr_det(r_s: f64, r_f: f64, k: f64) -> (f64, f64) {
    (r_s + r_f, r_s * r_f - k * (1.0 - r_s) * (1.0 - r_f))
}

/// GARK stability matrix: solves the stage system of the assembled tableau
/// on the linear test problem and applies the weights. Ordered (slow, fast).
pub fn gark_transfer(tab: &GarkTableau, z: &ZQuad) -> crate::error::Result<DMatrix<C>> {
    let nf = tab.stages_fast;
    let ns = tab.stages_slow;
    let n = nf + ns;
    let zero = C::new(0.0, 0.0);
    let mut lhs = DMatrix::from_element(n, n, zero);
    for i in 0..nf {
        for j in 0..nf {
            lhs[(i, j)] = -z.z_ff * tab.a_ff[(i, j)];
        }
        for j in 0..ns {
            lhs[(i, nf + j)] = -z.z_sf * tab.a_fs[(i, j)];
        }
        lhs[(i, i)] += 1.0;
    }
    for i in 0..ns {
        for j in 0..nf {
            lhs[(nf + i, j)] = -z.z_fs * tab.a_sf[(i, j)];
        }
        for j in 0..ns {
            lhs[(nf + i, nf + j)] = -z.z_ss * tab.a_ss[(i, j)];
        }
        lhs[(nf + i, nf + i)] += 1.0;
    }
    // right-hand columns for unit slow / unit fast initial data
    let mut rhs = DMatrix::from_element(n, 2, zero);
    for i in 0..nf {
        rhs[(i, 0)] = z.z_sf; // from y_slow
        rhs[(i, 1)] = z.z_ff; // from y_fast
    }
    for i in 0..ns {
        rhs[(nf + i, 0)] = z.z_ss;
        rhs[(nf + i, 1)] = z.z_fs;
    }
    let lu = lhs.lu();
    let stages = lu
        .solve(&rhs)
        .ok_or_else(|| crate::error::Error::InvalidConfig("singular GARK stage system".into()))?;
    let mut out = DMatrix::from_element(2, 2, zero);
    for col in 0..2 {
        let mut fast_acc = zero;
        let mut slow_acc = zero;
        for i in 0..nf {
            fast_acc += C::new(tab.b_f[i], 0.0) * stages[(i, col)];
        }
        for i in 0..ns {
            slow_acc += C::new(tab.b_s[i], 0.0) * stages[(nf + i, col)];
        }
        // identity part
        out[(0, col)] = slow_acc + if col == 0 { C::new(1.0, 0.0) } else { zero };
        out[(1, col)] = fast_acc + if col == 1 { C::new(1.0, 0.0) } else { zero };
    }
    Ok(out)
}

/// Linearly implicit (Rosenbrock) variant: same block structure with the
/// `beta = alpha + gamma` matrices in the stage system.
pub fn rosw_transfer(
    beta_ff: &DMatrix<f64>,
    beta_fs: &DMatrix<f64>,
    beta_sf: &DMatrix<f64>,
    beta_ss: &DMatrix<f64>,
    b_f: &DVector<f64>,
    b_s: &DVector<f64>,
    z: &ZQuad,
) -> crate::error::Result<DMatrix<C>> {
    let tab = GarkTableau {
        a_ff: beta_ff.clone(),
        a_fs: beta_fs.clone(),
        a_sf: beta_sf.clone(),
        a_ss: beta_ss.clone(),
        b_f: b_f.clone(),
        b_s: b_s.clone(),
        b_hat_f: None,
        b_hat_s: None,
        stages_fast: beta_ff.nrows(),
        stages_slow: beta_ss.nrows(),
    };
    gark_transfer(&tab, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::routh::spectral_radius_2x2;

    fn sample_z() -> ZQuad {
        ZQuad::from_test_problem(&TestProblem2x2::new(-1.0, -10.0, 0.5, 0.5).unwrap(), 0.1)
    }

    #[test]
    fn all_zero_rates_give_identity() {
        let z = ZQuad {
            z_ss: C::new(0.0, 0.0),
            z_ff: C::new(0.0, 0.0),
            z_fs: C::new(0.0, 0.0),
            z_sf: C::new(0.0, 0.0),
        };
        use EulerMode::*;
        for mode in [FeConstant, FeLinearInterp, BeFullyCoupled, BeDecoupledSlowest, BeDecoupledFastest, BeCoupledSlowest, BeCoupledFirstStep] {
            let r = euler_transfer(EulerCoupling::default_for(mode), &z, 3);
            assert!((r[(0, 0)] - 1.0).norm() < 1e-15, "{mode:?}");
            assert!((r[(1, 1)] - 1.0).norm() < 1e-15, "{mode:?}");
            assert!(r[(0, 1)].norm() < 1e-15 && r[(1, 0)].norm() < 1e-15, "{mode:?}");
        }
    }

    #[test]
    fn mrfe_constant_matches_printed_closed_form() {
        let z = sample_z();
        let m = 10;
        let r = euler_transfer(EulerCoupling::default_for(EulerMode::FeConstant), &z, m);
        let rs = fe_slow_factor(&z);
        let rf = fe_fast_factor(&z, m);
        assert!((r[(0, 0)] - rs).norm() < 1e-14);
        assert!((r[(0, 1)] - z.z_fs).norm() < 1e-14);
        assert!((r[(1, 0)] - (rf - 1.0) * z.z_sf / z.z_ff).norm() < 1e-13);
        assert!((r[(1, 1)] - rf).norm() < 1e-13);
        // printed trace/determinant identities
        let k = z.coupling_coefficient();
        let tr = r[(0, 0)] + r[(1, 1)];
        let det = r[(0, 0)] * r[(1, 1)] - r[(0, 1)] * r[(1, 0)];
        assert!((tr - (rs + rf)).norm() < 1e-13);
        assert!((det - (rs * rf - k * (1.0 - rs) * (1.0 - rf))).norm() < 1e-13);
    }

    #[test]
    fn be_decoupled_blocks_match_base_factors() {
        let p = TestProblem2x2::new(-2.0, -30.0, 0.0, 0.0).unwrap();
        let z = ZQuad::from_test_problem(&p, 0.5);
        for mode in [EulerMode::BeDecoupledSlowest, EulerMode::BeDecoupledFastest] {
            let r = euler_transfer(EulerCoupling::default_for(mode), &z, 4);
            assert!((r[(0, 0)] - be_slow_factor(&z)).norm() < 1e-14);
            assert!((r[(1, 1)] - be_fast_factor(&z, 4)).norm() < 1e-14);
            assert!(r[(0, 1)].norm() < 1e-15 && r[(1, 0)].norm() < 1e-15);
        }
    }

    #[test]
    fn coupled_slowest_matches_printed_det_tr() {
        let z = sample_z();
        let m = 6;
        let r = euler_transfer(EulerCoupling::default_for(EulerMode::BeCoupledSlowest), &z, m);
        let one = C::new(1.0, 0.0);
        let k = z.coupling_coefficient();
        let rf = be_fast_factor(&z, m);
        let denom = one - z.z_ss - z.z_ff + (one - k) * z.z_ss * z.z_ff;
        let det_expect = rf * (one - z.z_ff) / denom;
        let tr_expect = rf + (one - z.z_ff + (rf - one) * z.z_fs * z.z_sf / z.z_ff) / denom;
        let tr = r[(0, 0)] + r[(1, 1)];
        let det = r[(0, 0)] * r[(1, 1)] - r[(0, 1)] * r[(1, 0)];
        assert!((tr - tr_expect).norm() < 1e-13, "tr {tr} vs {tr_expect}");
        assert!((det - det_expect).norm() < 1e-13, "det {det} vs {det_expect}");
    }

    #[test]
    fn mrfe_interval_at_zero_factors() {
        let (lo, hi) = mrfe_stability_interval(0.0, 0.0).unwrap();
        assert!((lo + 1.0).abs() < 1e-15);
        assert!((hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mrfe_interval_contains_zero_coupling() {
        for (rs, rf) in [(0.3, -0.5), (-0.9, 0.1), (0.7, 0.7), (-0.2, -0.8)] {
            let (lo, hi) = mrfe_stability_interval(rs, rf).unwrap();
            assert!(lo < 0.0 && 0.0 < hi, "({rs},{rf}) -> ({lo},{hi})");
            // interior points are stable, per the discrete criterion
            let k_mid = 0.5 * (lo + hi);
            let (tr, det) = mrfe_tr_det(rs, rf, k_mid);
            assert!(crate::stability::routh::routh_hurwitz_discrete_tr_det(tr, det));
        }
    }

    #[test]
    fn degenerate_interval_reported() {
        assert!(mrfe_stability_interval(1.0, 0.3).is_err());
    }

    #[test]
    fn one_way_coupling_keeps_base_stability() {
        // z_fs = 0 or z_sf = 0: spectral radius equals the max base factor
        let p = TestProblem2x2::new(-1.0, -16.0, 0.8, 0.0).unwrap();
        let z = ZQuad::from_test_problem(&p, 0.12);
        let r = euler_transfer(EulerCoupling::default_for(EulerMode::FeConstant), &z, 16);
        let rho = spectral_radius_2x2(&r);
        let base = fe_slow_factor(&z).norm().max(fe_fast_factor(&z, 16).norm());
        assert!((rho - base).abs() < 1e-12);
    }
}
