//! Runge-Kutta coefficient data and classical order-condition residuals.

use nalgebra::{DMatrix, DVector};

/// A Butcher tableau with optional embedded weights.
///
/// The abscissae are always the row sums `c = A 1`.
#[derive(Debug, Clone)]
pub struct RkTableau {
    pub name: String,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub b_hat: Option<DVector<f64>>,
    pub c: DVector<f64>,
    pub order: usize,
    pub embedded_order: usize,
}

impl RkTableau {
    pub fn new(name: &str, a: DMatrix<f64>, b: DVector<f64>, order: usize) -> Self {
        let s = a.nrows();
        assert_eq!(a.ncols(), s);
        assert_eq!(b.len(), s);
        let c = DVector::from_fn(s, |i, _| a.row(i).sum());
        RkTableau { name: name.to_string(), a, b, b_hat: None, c, order, embedded_order: 0 }
    }

    pub fn with_embedded(mut self, b_hat: DVector<f64>, embedded_order: usize) -> Self {
        assert_eq!(b_hat.len(), self.stages());
        self.b_hat = Some(b_hat);
        self.embedded_order = embedded_order;
        self
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn is_explicit(&self) -> bool {
        for i in 0..self.stages() {
            for j in i..self.stages() {
                if self.a[(i, j)] != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Last stage coincides with the step solution.
    pub fn is_stiffly_accurate(&self) -> bool {
        let s = self.stages();
        (self.c[s - 1] - 1.0).abs() < 1e-14
            && (0..s).all(|j| (self.a[(s - 1, j)] - self.b[j]).abs() < 1e-14)
    }

    /// Residuals of the classical order conditions up to `up_to` (max 4),
    /// returned as `(condition label, |residual|)` pairs.
    pub fn order_residuals(&self, up_to: usize) -> Vec<(String, f64)> {
        order_residuals_for_weights(&self.a, &self.b, &self.c, up_to)
    }

    /// Same residuals for the embedded weights, if present.
    pub fn embedded_order_residuals(&self) -> Vec<(String, f64)> {
        match &self.b_hat {
            Some(bh) => order_residuals_for_weights(&self.a, bh, &self.c, self.embedded_order),
            None => Vec::new(),
        }
    }

    // ---- a small stock of base methods -------------------------------------

    pub fn forward_euler() -> Self {
        RkTableau::new("forward-euler", DMatrix::zeros(1, 1), DVector::from_element(1, 1.0), 1)
    }

    pub fn backward_euler() -> Self {
        RkTableau::new("backward-euler", DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0), 1)
    }

    pub fn implicit_midpoint() -> Self {
        RkTableau::new("implicit-midpoint", DMatrix::from_element(1, 1, 0.5), DVector::from_element(1, 1.0), 2)
    }

    /// Two-stage second-order explicit method with `c2 = 2/3` (Ralston).
    pub fn ralston2() -> Self {
        RkTableau::new(
            "ex2",
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0 / 3.0, 0.0]),
            DVector::from_vec(vec![0.25, 0.75]),
            2,
        )
        .with_embedded(DVector::from_vec(vec![1.0, 0.0]), 1)
    }

    /// L-stable two-stage SDIRK method with `gamma = 1 - sqrt(2)/2`.
    pub fn sdirk2() -> Self {
        let g = 1.0 - std::f64::consts::SQRT_2 / 2.0;
        RkTableau::new(
            "sdirk2",
            DMatrix::from_row_slice(2, 2, &[g, 0.0, 1.0 - g, g]),
            DVector::from_vec(vec![1.0 - g, g]),
            2,
        )
        .with_embedded(DVector::from_vec(vec![3.0 / 5.0, 2.0 / 5.0]), 1)
    }

    /// Root of `6 g^3 - 18 g^2 + 9 g - 1 = 0` near 0.4359, the stage
    /// coefficient of the stiffly accurate three-stage SDIRK3 method.
    pub fn sdirk3_gamma() -> f64 {
        let f = |g: f64| 6.0 * g.powi(3) - 18.0 * g * g + 9.0 * g - 1.0;
        let df = |g: f64| 18.0 * g * g - 36.0 * g + 9.0;
        let mut g = 0.44;
        for _ in 0..60 {
            let step = f(g) / df(g);
            g -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        g
    }

    /// Stiffly accurate three-stage SDIRK method of order three.
    pub fn sdirk3() -> Self {
        let g = Self::sdirk3_gamma();
        let b1 = -1.5 * g * g + 4.0 * g - 0.25;
        let b2 = 1.5 * g * g - 5.0 * g + 1.25;
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[g, 0.0, 0.0, 0.5 - 0.5 * g, g, 0.0, b1, b2, g],
        );
        let b = DVector::from_vec(vec![b1, b2, g]);
        let b_hat = DVector::from_vec(vec![
            -1.5 * g * g + 3.0 * g - 0.25,
            1.5 * g * g - 3.0 * g + 1.25,
            0.0,
        ]);
        RkTableau::new("sdirk3", a, b, 3).with_embedded(b_hat, 2)
    }

    /// Three-stage third-order explicit method with `c2` free (here 1/2).
    pub fn ex3(c2: f64) -> Self {
        let a31 = (3.0 * c2 * c2 - 3.0 * c2 + 1.0) / (c2 * (3.0 * c2 - 2.0));
        let a32 = (c2 - 1.0) / (c2 * (3.0 * c2 - 2.0));
        let b1 = (3.0 * c2 - 1.0) / (6.0 * c2);
        let b2 = -1.0 / (6.0 * (c2 - 1.0) * c2);
        let b3 = (3.0 * c2 - 2.0) / (6.0 * (c2 - 1.0));
        RkTableau::new(
            "ex3",
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, c2, 0.0, 0.0, a31, a32, 0.0]),
            DVector::from_vec(vec![b1, b2, b3]),
            3,
        )
    }

    /// Two-stage Radau-IIA method of order three.
    pub fn radau_iia3() -> Self {
        RkTableau::new(
            "radau-iia3",
            DMatrix::from_row_slice(2, 2, &[5.0 / 12.0, -1.0 / 12.0, 0.75, 0.25]),
            DVector::from_vec(vec![0.75, 0.25]),
            3,
        )
    }

    /// Heun's second-order strong-stability-preserving method.
    pub fn heun2() -> Self {
        RkTableau::new(
            "heun2",
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.5, 0.5]),
            2,
        )
    }

    /// Classical four-stage RK4.
    pub fn rk4() -> Self {
        RkTableau::new(
            "rk4",
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    0.0, 0.0, 0.0, 0.0, //
                    0.5, 0.0, 0.0, 0.0, //
                    0.0, 0.5, 0.0, 0.0, //
                    0.0, 0.0, 1.0, 0.0,
                ],
            ),
            DVector::from_vec(vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]),
            4,
        )
    }
}

fn order_residuals_for_weights(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    up_to: usize,
) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let dot = |w: &DVector<f64>, v: &DVector<f64>| w.dot(v);
    let cw = |p: i32| c.map(|x| x.powi(p));
    if up_to >= 1 {
        out.push(("b.1 = 1".to_string(), (b.sum() - 1.0).abs()));
    }
    if up_to >= 2 {
        out.push(("b.c = 1/2".to_string(), (dot(b, c) - 0.5).abs()));
    }
    if up_to >= 3 {
        out.push(("b.c^2 = 1/3".to_string(), (dot(b, &cw(2)) - 1.0 / 3.0).abs()));
        out.push(("b.Ac = 1/6".to_string(), (dot(b, &(a * c)) - 1.0 / 6.0).abs()));
    }
    if up_to >= 4 {
        let ac = a * c;
        out.push(("b.c^3 = 1/4".to_string(), (dot(b, &cw(3)) - 0.25).abs()));
        out.push((
            "b.(c*Ac) = 1/8".to_string(),
            (b.iter().zip(c.iter()).zip(ac.iter()).map(|((bi, ci), aci)| bi * ci * aci).sum::<f64>() - 0.125).abs(),
        ));
        out.push(("b.Ac^2 = 1/12".to_string(), (dot(b, &(a * cw(2))) - 1.0 / 12.0).abs()));
        out.push(("b.AAc = 1/24".to_string(), (dot(b, &(a * ac)) - 1.0 / 24.0).abs()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_residual(tab: &RkTableau) -> f64 {
        tab.order_residuals(tab.order).iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    #[test]
    fn stock_methods_meet_declared_orders() {
        for tab in [
            RkTableau::forward_euler(),
            RkTableau::backward_euler(),
            RkTableau::implicit_midpoint(),
            RkTableau::ralston2(),
            RkTableau::sdirk2(),
            RkTableau::sdirk3(),
            RkTableau::ex3(0.5),
            RkTableau::radau_iia3(),
            RkTableau::heun2(),
            RkTableau::rk4(),
        ] {
            let r = max_residual(&tab);
            assert!(r < 1e-12, "{} residual {r:.3e}", tab.name);
        }
    }

    #[test]
    fn sdirk2_bc_is_half() {
        // b.c = gamma(2 - gamma) = 1/2 for gamma = 1 - sqrt(2)/2
        let tab = RkTableau::sdirk2();
        let bc = tab.b.dot(&tab.c);
        assert!((bc - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sdirk3_gamma_matches_literature_digits() {
        let g = RkTableau::sdirk3_gamma();
        assert!((g - 0.43586).abs() < 1e-5, "gamma = {g}");
    }

    #[test]
    fn perturbed_tableau_detected() {
        let mut tab = RkTableau::ralston2();
        tab.a[(1, 0)] += 1e-3;
        tab.c = DVector::from_fn(2, |i, _| tab.a.row(i).sum());
        let worst = max_residual(&tab);
        assert!(worst > 1e-4 && worst < 1e-2, "residual {worst:.3e} should be near the perturbation");
    }

    #[test]
    fn explicit_detection() {
        assert!(RkTableau::ralston2().is_explicit());
        assert!(!RkTableau::sdirk2().is_explicit());
    }

    #[test]
    fn row_sums_define_c() {
        let tab = RkTableau::sdirk3();
        for i in 0..3 {
            assert!((tab.c[i] - tab.a.row(i).sum()).abs() < 1e-14);
        }
    }
}
