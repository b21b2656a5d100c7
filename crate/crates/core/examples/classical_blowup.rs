//! The classical (epsilon = 0) model on the disc. Below the critical
//! interaction strength the concentrated bump spreads out; above it the
//! density concentrates until the detector fires.
//!
//! cargo run --release --example classical_blowup

use std::f64::consts::PI;

use qdd::classical::{evolve_classical, ClassicalConfig};
use qdd::profiles::profile;
use qdd::{build_grid, Geometry};

fn main() -> qdd::Result<()> {
    let grid = build_grid(2, Geometry::Radial, 201, 1.0)?;
    let n0 = profile("concentrated")?.state(&grid)?;
    let cfg = ClassicalConfig {
        max_density_cap: Some(1e4 / PI),
        ..ClassicalConfig::default()
    };
    for factor in [4.0, 7.0, 16.0] {
        let (traj, report) = evolve_classical(&grid, &n0, factor * PI, &cfg, 0.2, 0)?;
        let peak = traj.max_density_trace().into_iter().fold(0.0, f64::max);
        match report.trigger {
            Some(t) => println!(
                "sigma = {factor:4}pi: blowup ({t:?}) at t = {:.5}, max n {peak:.1}",
                report.t_detect.unwrap_or(f64::NAN)
            ),
            None => println!(
                "sigma = {factor:4}pi: completed to t = {:.3}, max n {peak:.1}",
                traj.final_time()
            ),
        }
    }
    Ok(())
}
