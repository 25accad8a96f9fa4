//! Linear stability machinery: phi functions, Routh-Hurwitz criteria,
//! transfer matrices on 2x2 test problems, and region scans.

pub mod companion;
pub mod phi;
pub mod routh;
pub mod scan;
pub mod transfer;

pub use companion::{mrlmm_companion, mrlmm_spectral_radius};
pub use phi::{phi, phi_real};
pub use routh::{
    routh_hurwitz_continuous, routh_hurwitz_discrete, routh_hurwitz_discrete_tr_det, spectral_radius,
    spectral_radius_2x2, spectral_radius_tr_det,
};
pub use transfer::{euler_transfer, gark_transfer, mrfe_stability_interval, mrfe_tr_det, rosw_transfer, ZQuad};
pub use scan::{region_scan, StabilityScan, DEFAULT_GRID, RHO_TOL};
