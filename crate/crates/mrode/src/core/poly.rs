//! Small dense polynomials in the power basis.

use crate::error::{Error, Result};

/// Polynomial `c_0 + c_1 x + c_2 x^2 + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Antiderivative with zero constant term.
    pub fn integral(&self) -> Polynomial {
        let mut coeffs = vec![0.0; self.coeffs.len() + 1];
        for (k, &c) in self.coeffs.iter().enumerate() {
            coeffs[k + 1] = c / (k + 1) as f64;
        }
        Polynomial { coeffs }
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![0.0; n];
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c = self.coeffs.get(k).copied().unwrap_or(0.0) + other.coeffs.get(k).copied().unwrap_or(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Polynomial::zero();
        }
        let mut coeffs = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Polynomial { coeffs }
    }
}

/// Lagrange basis polynomial `l_k` for the given abscissae: `l_k(x_j) = delta_{kj}`.
pub fn lagrange_basis(xs: &[f64], k: usize) -> Result<Polynomial> {
    let mut p = Polynomial::constant(1.0);
    for (j, &xj) in xs.iter().enumerate() {
        if j == k {
            continue;
        }
        let denom = xs[k] - xj;
        if denom == 0.0 {
            return Err(Error::BadParameter(format!("duplicate abscissa {xj} in interpolation nodes")));
        }
        p = p.mul(&Polynomial::new(vec![-xj / denom, 1.0 / denom]));
    }
    Ok(p)
}

/// Interpolating polynomial through `(x_k, y_k)`; degree `len - 1`.
pub fn interpolate(xs: &[f64], ys: &[f64]) -> Result<Polynomial> {
    assert_eq!(xs.len(), ys.len());
    let mut p = Polynomial::zero();
    for k in 0..xs.len() {
        p = p.add(&lagrange_basis(xs, k)?.scale(ys[k]));
    }
    Ok(p)
}
