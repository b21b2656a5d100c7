//! Time-step refinement: densities at a fixed time for tau0/2^j converge at
//! first order, as expected of implicit Euler.
//!
//! cargo run --release --example tau_refinement

use qdd::profiles::InitialProfile;
use qdd::scheme::{ModelParams, StepConfig};
use qdd::sweep::tau_refinement_study;
use qdd::{build_grid, Geometry};

fn main() -> qdd::Result<()> {
    let grid = build_grid(1, Geometry::Slab, 101, 1.0)?;
    let n0 = InitialProfile::Cosine {
        amplitude: 0.5,
        mode: 1,
    }
    .state(&grid)?;
    let table = tau_refinement_study(
        &grid,
        &n0,
        &ModelParams::new(0.1, 0.0),
        &StepConfig::default(),
        4e-4,
        4,
        0.02,
    )?;
    for (tau, dist) in table.taus.iter().zip(&table.distances) {
        println!("tau = {tau:.2e}: |n_tau - n_tau/2| = {dist:.4e}");
    }
    println!("fitted order {:?}, monotone {}", table.order, table.monotone);
    Ok(())
}
