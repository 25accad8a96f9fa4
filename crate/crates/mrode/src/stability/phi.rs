//! The phi functions of exponential integrators:
//! `phi_0(z) = e^z`, `phi_k(z) = int_0^1 e^{z(1-t)} t^{k-1} dt / (k-1)!`-free
//! normalization, i.e. `phi_k(0) = 1/k!` and
//! `phi_{k+1}(z) = (phi_k(z) - 1/k!) / z`.

use num_complex::Complex64;

/// Crossover between the Taylor series and the upward recurrence; below this
/// magnitude the recurrence cancels catastrophically.
const SERIES_RADIUS: f64 = 0.5;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
}

/// `phi_k(z)` for complex argument, stable for both small and large `|z|`.
pub fn phi(k: usize, z: Complex64) -> Complex64 {
    if k == 0 {
        return z.exp();
    }
    if z.norm() < SERIES_RADIUS {
        // phi_k(z) = sum_{j>=0} z^j / (j + k)!
        let mut term = Complex64::new(1.0 / factorial(k), 0.0);
        let mut sum = term;
        let mut j = 1usize;
        loop {
            term = term * z / (j + k) as f64;
            sum += term;
            if term.norm() <= 1e-18 * sum.norm().max(1e-300) || j > 200 {
                return sum;
            }
            j += 1;
        }
    }
    // upward recurrence from phi_0
    let mut p = z.exp();
    for j in 0..k {
        p = (p - 1.0 / factorial(j)) / z;
    }
    p
}

/// Real-argument convenience wrapper.
pub fn phi_real(k: usize, z: f64) -> f64 {
    phi(k, Complex64::new(z, 0.0)).re
}
