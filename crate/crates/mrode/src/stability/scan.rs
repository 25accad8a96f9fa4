//! Stability region scans over the polar grid
//! `z_ss = exp(i theta_s)`, `z_ff = m exp(i theta_f)`,
//! `theta in [pi/2, 3 pi/2]`.

use rayon::prelude::*;
use std::f64::consts::PI;

/// Power-boundedness surrogate: a grid point counts as stable when the
/// spectral radius stays within `1 + RHO_TOL`. Defective boundary cases are
/// not resolved further.
pub const RHO_TOL: f64 = 1e-10;

pub const DEFAULT_GRID: usize = 181;

/// Raster of spectral radii over the `(theta_f, theta_s)` grid.
#[derive(Debug, Clone)]
pub struct StabilityScan {
    pub theta_f: Vec<f64>,
    pub theta_s: Vec<f64>,
    /// Row-major: `rho[i_f * theta_s.len() + i_s]`.
    pub rho: Vec<f64>,
    pub method: String,
    pub m: usize,
    pub xi: f64,
    pub alpha: f64,
}

impl StabilityScan {
    pub fn is_stable(&self, i_f: usize, i_s: usize) -> bool {
        self.rho[i_f * self.theta_s.len() + i_s] <= 1.0 + RHO_TOL
    }

    pub fn stable_fraction(&self) -> f64 {
        let stable = self.rho.iter().filter(|&&r| r <= 1.0 + RHO_TOL).count();
        stable as f64 / self.rho.len() as f64
    }

    /// Half-angle (degrees) of the largest symmetric wedge
    /// `max(|theta_f - pi|, |theta_s - pi|) <= theta` that contains no
    /// unstable grid point.
    pub fn wedge_angle_deg(&self) -> f64 {
        let mut limit = PI / 2.0;
        for (i_f, &tf) in self.theta_f.iter().enumerate() {
            for (i_s, &ts) in self.theta_s.iter().enumerate() {
                if !self.is_stable(i_f, i_s) {
                    let reach = (tf - PI).abs().max((ts - PI).abs());
                    limit = limit.min(reach);
                }
            }
        }
        limit.to_degrees()
    }
}

/// Evaluate `rho(theta_f, theta_s)` over the grid in parallel.
pub fn region_scan<F>(method: &str, m: usize, xi: f64, alpha: f64, grid: usize, rho_fn: F) -> StabilityScan
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let thetas: Vec<f64> = (0..grid)
        .map(|i| PI / 2.0 + PI * i as f64 / (grid - 1) as f64)
        .collect();
    let rho: Vec<f64> = thetas
        .par_iter()
        .flat_map_iter(|&tf| {
            let rho_fn = &rho_fn;
            thetas.iter().map(move |&ts| rho_fn(tf, ts)).collect::<Vec<_>>()
        })
        .collect();
    StabilityScan {
        theta_f: thetas.clone(),
        theta_s: thetas,
        rho,
        method: method.to_string(),
        m,
        xi,
        alpha,
    }
}
