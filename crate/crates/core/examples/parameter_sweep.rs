//! A small (sigma, epsilon) sweep in parallel. Records are written as JSON
//! lines next to one output directory per run, and reruns are identical.
//!
//! cargo run --release --example parameter_sweep -- [out_dir]

use std::f64::consts::PI;
use std::path::PathBuf;

use qdd::sweep::{run_sweep, SweepSpec};

fn main() -> qdd::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("qdd_sweep_example"));
    let mut spec = SweepSpec::load("dichotomy")?;
    spec.sigmas = vec![4.0 * PI, 8.0 * PI, 16.0 * PI];
    spec.horizon = 0.05;
    spec.out_dir = out.clone();

    let records = run_sweep(&spec)?;
    for r in &records {
        match &r.terminal {
            Some(t) => println!(
                "{:36} {:?} t = {:.5} max n = {:.2}",
                r.id, r.outcome, t.t, t.max_n
            ),
            None => println!("{:36} {:?}", r.id, r.outcome),
        }
    }
    println!("wrote {}", out.join("runs.jsonl").display());
    Ok(())
}
