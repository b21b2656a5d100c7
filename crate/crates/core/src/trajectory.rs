//! Per-step reports, recorded snapshots and their CSV encodings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::entropy_report;
use crate::error::{Error, Result};
use crate::grid::{format_sig17, DensityState, Grid, ScalarField};

/// Both sides of the discrete entropy bound for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Effective time step; zero for the initial record.
    pub tau: f64,
    /// Outer iterations of whichever nonlinear solver produced the step.
    pub picard_iterations: usize,
    /// Linearizations performed in total, inner solves included.
    pub newton_totals: usize,
    pub mass: f64,
    pub entropy: f64,
    pub fisher: f64,
    pub hessian_l2: f64,
    pub min_n: f64,
    pub max_n: f64,
    pub dissipation: DissipationCheck,
    /// `log ∫e^y`. The returned `F` has zero mean; the quasi-Fermi level
    /// normalized with `β = -log ∫e^y` is `F - gauge_shift`.
    pub gauge_shift: f64,
    /// `‖H(y) - y‖∞` for the composed fixed-point map at the returned iterate.
    pub fixed_point_residual: f64,
    pub continuation_used: bool,
    /// Mass removed by clipping negative values (classical stepper only).
    #[serde(default)]
    pub clipped_mass: f64,
}

impl StepReport {
    /// Report for a state that was not produced by a step.
    pub fn for_state(grid: &Grid, state: &DensityState) -> Result<Self> {
        let e = entropy_report(grid, state)?;
        Ok(Self {
            tau: 0.0,
            picard_iterations: 0,
            newton_totals: 0,
            mass: e.mass,
            entropy: e.entropy,
            fisher: e.fisher,
            hessian_l2: e.hessian_l2,
            min_n: e.min_n,
            max_n: e.max_n,
            dissipation: DissipationCheck {
                lhs: 0.0,
                rhs: 0.0,
                holds: true,
            },
            gauge_shift: 0.0,
            fixed_point_residual: 0.0,
            continuation_used: false,
            clipped_mass: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub state: DensityState,
    /// Quasi-Fermi level; absent for states not produced by a step.
    pub f: Option<ScalarField>,
    pub phi: ScalarField,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// Record times, starting at 0.
    pub times: Vec<f64>,
    /// `reports[k]` describes the state at `times[k]`.
    pub reports: Vec<StepReport>,
    /// Thinned states; always contains the first and last record.
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn final_state(&self) -> Option<&DensityState> {
        self.snapshots.last().map(|s| &s.state)
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.entropy).collect()
    }

    pub fn max_density_trace(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.max_n).collect()
    }
}

pub const TIMESERIES_HEADER: &str = "t,tau_eff,mass,entropy,fisher,hessian_l2,min_n,max_n,picard_iters";

pub fn timeseries_csv(traj: &Trajectory) -> String {
    let mut out = String::from(TIMESERIES_HEADER);
    out.push('\n');
    for (t, r) in traj.times.iter().zip(&traj.reports) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            format_sig17(*t),
            format_sig17(r.tau),
            format_sig17(r.mass),
            format_sig17(r.entropy),
            format_sig17(r.fisher),
            format_sig17(r.hessian_l2),
            format_sig17(r.min_n),
            format_sig17(r.max_n),
            r.picard_iterations
        );
    }
    out
}

pub fn write_timeseries_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, timeseries_csv(traj)).map_err(|e| Error::io(path, e))
}

pub fn snapshot_csv(grid: &Grid, snap: &Snapshot) -> String {
    let n = snap.state.density();
    let mut out = format!("{},n,F,Phi\n", grid.coordinate_name());
    for i in 0..grid.len() {
        let f = snap.f.as_ref().map_or(f64::NAN, |f| f.values[i]);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_sig17(grid.nodes()[i]),
            format_sig17(n[i]),
            format_sig17(f),
            format_sig17(snap.phi.values[i])
        );
    }
    out
}

pub fn write_snapshot_csv(path: &Path, grid: &Grid, snap: &Snapshot) -> Result<()> {
    std::fs::write(path, snapshot_csv(grid, snap)).map_err(|e| Error::io(path, e))
}
