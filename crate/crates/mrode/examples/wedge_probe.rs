use mrode::lmm_mr::{LmmOptions, LmmScheme, LmmStrategy};
use mrode::stability::companion::mrlmm_spectral_radius;
use mrode::stability::scan::region_scan;
use mrode::stability::transfer::ZQuad;
use std::time::Instant;

fn main() {
    let scheme = LmmScheme::bdf(2).unwrap();
    for strategy in [
        LmmStrategy::ImplicitCoupledSlowest,
        LmmStrategy::ImplicitDecoupledSlowest,
    ] {
        for xi in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0] {
            let t0 = Instant::now();
            let scan = region_scan("bdf2", 2, xi, 1.0, 181, |tf, ts| {
                let z = ZQuad::from_polar(tf, ts, 2, xi, 1.0);
                mrlmm_spectral_radius(&scheme, strategy, 2, &z, LmmOptions::default()).unwrap_or(f64::INFINITY)
            });
            println!(
                "{strategy:?} xi={xi:.3}: wedge {:.2} deg, stable fraction {:.4}, {:.1?}",
                scan.wedge_angle_deg(),
                scan.stable_fraction(),
                t0.elapsed()
            );
        }
    }
}
