//! Pure quantum diffusion (sigma = 0) on the slab: the relative entropy of a
//! cosine perturbation decays, mass is conserved and the density stays
//! positive.
//!
//! cargo run --release --example dlss_entropy_decay

use qdd::profiles::InitialProfile;
use qdd::scheme::{evolve, ModelParams, StepConfig};
use qdd::{build_grid, Geometry};

fn main() -> qdd::Result<()> {
    let grid = build_grid(1, Geometry::Slab, 201, 1.0)?;
    let n0 = InitialProfile::Cosine {
        amplitude: 0.5,
        mode: 1,
    }
    .state(&grid)?;
    let cfg = StepConfig {
        tau: 1e-4,
        ..StepConfig::default()
    };
    let traj = evolve(&grid, &n0, &ModelParams::new(0.1, 0.0), &cfg, 0.1, 0)?;

    println!("{:>8} {:>14} {:>14} {:>12}", "t", "entropy", "mass - 1", "min n");
    for (t, r) in traj.times.iter().zip(&traj.reports).step_by(100) {
        println!(
            "{t:8.4} {:14.6e} {:14.2e} {:12.6}",
            r.entropy,
            r.mass - 1.0,
            r.min_n
        );
    }
    let e = traj.entropies();
    let increases = e.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
    println!("entropy increases over {} steps: {increases}", e.len() - 1);
    Ok(())
}
