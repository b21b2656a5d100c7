//! The two elliptic building blocks: the Dirichlet Poisson problem for the
//! potential and one implicit step of the full scheme, which solves the
//! coupled exponential system.
//!
//! cargo run --release --example elliptic_solvers

use std::f64::consts::PI;

use qdd::elliptic::solve_poisson_dirichlet;
use qdd::profiles::InitialProfile;
use qdd::scheme::{step, ModelParams, StepConfig};
use qdd::{build_grid, Bc, Geometry, ScalarField};

fn main() -> qdd::Result<()> {
    // -u'' = 1 has the exact solution x(1-x)/2, which the stencil reproduces.
    let grid = build_grid(1, Geometry::Slab, 101, 1.0)?;
    let phi = solve_poisson_dirichlet(&grid, &ScalarField::constant(&grid, 1.0, Bc::None))?;
    let exact = ScalarField::from_fn(&grid, Bc::DirichletZero, |x| 0.5 * x * (1.0 - x));
    println!("quadratic: max error {:.2e}", phi.max_abs_diff(&exact));

    // -u'' = pi^2 sin(pi x) converges at second order.
    for n in [51, 101, 201, 401] {
        let g = build_grid(1, Geometry::Slab, n, 1.0)?;
        let f = ScalarField::from_fn(&g, Bc::None, |x| PI * PI * (PI * x).sin());
        let u = solve_poisson_dirichlet(&g, &f)?;
        let e = ScalarField::from_fn(&g, Bc::DirichletZero, |x| (PI * x).sin());
        println!("sine, N = {n:4}: max error {:.3e}", u.max_abs_diff(&e));
    }

    // Without interaction the step dissipates entropy.
    let disc = build_grid(2, Geometry::Radial, 201, 1.0)?;
    let w = InitialProfile::Gaussian { width: 0.1 }.state(&disc)?;
    let out = step(&disc, &w, &ModelParams::new(0.1, 0.0), &StepConfig::default())?;
    let r = &out.report;
    println!(
        "one step on the disc: newton iterations {}, mass {:.15}, min n {:.3e}, entropy {:.6} -> {:.6}",
        r.newton_totals,
        r.mass,
        r.min_n,
        qdd::diagnostics::entropy(&disc, &w.density())?,
        r.entropy
    );
    println!(
        "dissipation check: lhs {:.4e} <= rhs {:.4e}: {}",
        r.dissipation.lhs, r.dissipation.rhs, r.dissipation.holds
    );
    Ok(())
}
