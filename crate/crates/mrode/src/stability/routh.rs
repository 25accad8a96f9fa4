//! Routh-Hurwitz criteria for 2x2 systems and small spectral radii.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Continuous-time stability: both eigenvalues of `A` in the open left half
/// plane iff `tr(A) < 0` and `det(A) > 0`.
pub fn routh_hurwitz_continuous(a: &DMatrix<f64>) -> bool {
    assert_eq!((a.nrows(), a.ncols()), (2, 2));
    let tr = a[(0, 0)] + a[(1, 1)];
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    tr < 0.0 && det > 0.0
}

/// Discrete-time stability from trace and determinant: spectral radius of a
/// real 2x2 matrix is bounded by one iff
/// `1 + tr + det > 0`, `det < 1`, and `1 - tr + det > 0`.
pub fn routh_hurwitz_discrete_tr_det(tr: f64, det: f64) -> bool {
    1.0 + tr + det > 0.0 && det < 1.0 && 1.0 - tr + det > 0.0
}

pub fn routh_hurwitz_discrete(r: &DMatrix<f64>) -> bool {
    assert_eq!((r.nrows(), r.ncols()), (2, 2));
    let tr = r[(0, 0)] + r[(1, 1)];
    let det = r[(0, 0)] * r[(1, 1)] - r[(0, 1)] * r[(1, 0)];
    routh_hurwitz_discrete_tr_det(tr, det)
}

/// Spectral radius of a 2x2 complex matrix through the characteristic
/// polynomial roots.
pub fn spectral_radius_2x2(r: &DMatrix<Complex64>) -> f64 {
    assert_eq!((r.nrows(), r.ncols()), (2, 2));
    let tr = r[(0, 0)] + r[(1, 1)];
    let det = r[(0, 0)] * r[(1, 1)] - r[(0, 1)] * r[(1, 0)];
    let disc = (tr * tr - det * 4.0).sqrt();
    let l1 = (tr + disc) / 2.0;
    let l2 = (tr - disc) / 2.0;
    l1.norm().max(l2.norm())
}

/// Spectral radius from real trace/determinant.
pub fn spectral_radius_tr_det(tr: f64, det: f64) -> f64 {
    let disc = Complex64::new(tr * tr - 4.0 * det, 0.0).sqrt();
    let tr = Complex64::new(tr, 0.0);
    ((tr + disc) / 2.0).norm().max(((tr - disc) / 2.0).norm())
}

/// Spectral radius of a general dense complex matrix via the eigensolver.
pub fn spectral_radius(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 2 {
        return spectral_radius_2x2(m);
    }
    m.clone()
        .eigenvalues()
        .map(|eigs| eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_identity_is_stable() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(routh_hurwitz_continuous(&a));
    }

    #[test]
    fn strong_coupling_destabilizes() {
        // eigenvalues {1, -3}: det = -3 < 0
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 2.0, -1.0]);
        assert!(!routh_hurwitz_continuous(&a));
    }

    #[test]
    fn zero_matrix_discrete_stable() {
        let r = DMatrix::zeros(2, 2);
        assert!(routh_hurwitz_discrete(&r));
    }

    #[test]
    fn contractive_matrix_discrete_stable() {
        let r = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.2, 0.4]);
        assert!(routh_hurwitz_discrete(&r));
        let rc = r.map(|v| Complex64::new(v, 0.0));
        assert!(spectral_radius_2x2(&rc) < 1.0);
    }

    #[test]
    fn eigenvalue_two_detected() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        assert!(!routh_hurwitz_discrete(&r));
    }

    #[test]
    fn criteria_agree_with_eigenvalues_on_random_draws() {
        let mut state = 0x853c49e6748fea9bu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 4.0 - 2.0
        };
        let mut checked = 0usize;
        for _ in 0..10_000 {
            let r = DMatrix::from_fn(2, 2, |_, _| next());
            let rc = r.map(|v| Complex64::new(v, 0.0));
            let rho = spectral_radius_2x2(&rc);
            // skip a thin band around the stability boundary
            if (rho - 1.0).abs() < 1e-12 {
                continue;
            }
            assert_eq!(routh_hurwitz_discrete(&r), rho < 1.0, "rho = {rho}");
            let ac = DMatrix::from_fn(2, 2, |i, j| r[(i, j)]);
            let eig_stable = ac
                .clone()
                .map(|v| Complex64::new(v, 0.0))
                .eigenvalues()
                .unwrap()
                .iter()
                .all(|z| z.re < 0.0);
            let re_margin = ac
                .clone()
                .map(|v| Complex64::new(v, 0.0))
                .eigenvalues()
                .unwrap()
                .iter()
                .map(|z| z.re.abs())
                .fold(f64::INFINITY, f64::min);
            if re_margin > 1e-12 {
                assert_eq!(routh_hurwitz_continuous(&r), eig_stable);
            }
            checked += 1;
        }
        assert!(checked > 9_000);
    }
}
