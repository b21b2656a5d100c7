//! The ε = 0 drift-diffusion model `n_t = Δn - σ div(n ∇Φ)`, `-ΔΦ = n`,
//! with a blowup detector.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::banded::{solve_banded, BandedMatrix};
use crate::elliptic::solve_poisson_dirichlet;
use crate::error::{Error, Result};
use crate::grid::{format_sig17, Bc, DensityState, Grid, ScalarField};
use crate::trajectory::{timeseries_csv, Snapshot, StepReport, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    pub tau: f64,
    /// Halving below this step counts as collapse.
    pub tau_min: f64,
    /// Largest admissible `τ · outflow / volume` of the explicit drift.
    pub cfl_max: f64,
    /// `None` selects `1e6 / |Ω|`. A collapsing density saturates near the
    /// inverse volume of the first cell, so at moderate N this default is
    /// out of reach and the cap has to be set lower.
    pub max_density_cap: Option<f64>,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            tau: 1e-4,
            tau_min: 1e-9,
            cfl_max: 0.5,
            max_density_cap: None,
        }
    }
}

impl ClassicalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau) {
            return Err(Error::InvalidArgument("tau_min must lie in (0, tau]".into()));
        }
        if !(self.cfl_max > 0.0 && self.cfl_max <= 1.0) {
            return Err(Error::InvalidArgument("cfl_max must lie in (0, 1]".into()));
        }
        if let Some(c) = self.max_density_cap {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("max_density_cap must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn cap(&self, grid: &Grid) -> f64 {
        self.max_density_cap.unwrap_or(1e6 / grid.volume())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalStep {
    pub n: Vec<f64>,
    pub phi: ScalarField,
    /// `∫n` before clipping.
    pub mass_before_clip: f64,
    pub clipped_mass: f64,
    pub cfl: f64,
}

/// Face velocities `σ ∂Φ` and the drift CFL number for step `τ`.
fn drift(grid: &Grid, phi: &[f64], sigma: f64, tau: f64) -> (Vec<f64>, f64) {
    let n = grid.len();
    let h = grid.h();
    let v: Vec<f64> = (0..n - 1).map(|k| sigma * (phi[k + 1] - phi[k]) / h).collect();
    let mut outflow = vec![0.0; n];
    for (k, &vk) in v.iter().enumerate() {
        let a = grid.faces()[k] * vk.abs();
        if vk > 0.0 {
            outflow[k] += a;
        } else {
            outflow[k + 1] += a;
        }
    }
    let cfl = outflow
        .iter()
        .zip(grid.weights())
        .fold(0.0_f64, |m, (o, w)| m.max(tau * o / w));
    (v, cfl)
}

/// One step of `(n - w)/τ = Δn - σ div(w ∇Φ)` with `-ΔΦ = w`: implicit
/// diffusion, upwinded explicit drift, then clipping of negative values and
/// renormalization.
pub fn classical_step(grid: &Grid, w: &[f64], sigma: f64, tau: f64) -> Result<ClassicalStep> {
    grid.check(w)?;
    if let Some((node, &value)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeDensity { node, value });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let phi = solve_poisson_dirichlet(grid, &ScalarField::new(w.to_vec(), Bc::None))?;
    let (v, cfl) = drift(grid, &phi.values, sigma, tau);
    let n_nodes = grid.len();
    let mut rhs = w.to_vec();
    for (k, &vk) in v.iter().enumerate() {
        let upwind = if vk > 0.0 { w[k] } else { w[k + 1] };
        let flux = tau * grid.faces()[k] * vk * upwind;
        rhs[k] -= flux / grid.weights()[k];
        rhs[k + 1] += flux / grid.weights()[k + 1];
    }
    let (lo, di, up) = grid.neg_div_stencil(&vec![1.0; n_nodes - 1]);
    let lo: Vec<f64> = lo.iter().map(|x| tau * x).collect();
    let di: Vec<f64> = di.iter().map(|x| 1.0 + tau * x).collect();
    let up: Vec<f64> = up.iter().map(|x| tau * x).collect();
    solve_banded(BandedMatrix::tridiagonal(&lo, &di, &up), &mut rhs)?;
    if !rhs.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument(
            "classical step produced non-finite values".into(),
        ));
    }
    let mass_before_clip = grid.integrate_values(&rhs);
    let negative: Vec<f64> = rhs.iter().map(|x| x.min(0.0)).collect();
    let clipped_mass = -grid.integrate_values(&negative);
    for x in &mut rhs {
        *x = x.max(0.0);
    }
    let m = grid.integrate_values(&rhs);
    for x in &mut rhs {
        *x /= m;
    }
    Ok(ClassicalStep {
        n: rhs,
        phi,
        mass_before_clip,
        clipped_mass,
        cfl,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowupTrigger {
    MaxDensity,
    StepCollapse,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub blew_up: bool,
    pub t_detect: Option<f64>,
    pub trigger: Option<BlowupTrigger>,
    pub max_n_trace: Vec<f64>,
    /// Message of the failure behind a `SolverFailure` trigger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Runs to `horizon` or until the detector fires. Steps whose drift CFL
/// exceeds `cfl_max` are halved; halving below `tau_min` is reported as
/// collapse. After a reduced step τ doubles back towards `cfg.tau`.
pub fn evolve_classical(
    grid: &Grid,
    n0: &DensityState,
    sigma: f64,
    cfg: &ClassicalConfig,
    horizon: f64,
    snapshot_every: usize,
) -> Result<(Trajectory, BlowupReport)> {
    cfg.validate()?;
    grid.check(&n0.rho().values)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let cap = cfg.cap(grid);
    let mut traj = Trajectory::default();
    let mut n = n0.density();
    let phi0 = solve_poisson_dirichlet(grid, &ScalarField::new(n.clone(), Bc::None))?;
    traj.times.push(0.0);
    traj.reports.push(StepReport::for_state(grid, n0)?);
    traj.snapshots.push(Snapshot {
        t: 0.0,
        state: n0.clone(),
        f: None,
        phi: phi0,
    });

    let mut report = BlowupReport {
        blew_up: false,
        t_detect: None,
        trigger: None,
        max_n_trace: vec![n0.max_density()],
        reason: None,
    };
    let fire = |report: &mut BlowupReport, t: f64, trigger: BlowupTrigger, reason: Option<String>| {
        report.blew_up = true;
        report.t_detect = Some(t);
        report.trigger = Some(trigger);
        report.reason = reason;
    };

    let end_tol = 1e-12 * horizon;
    let mut t = 0.0;
    let mut tau = cfg.tau;
    let mut k = 0usize;
    let mut pending: Option<Snapshot> = None;
    while horizon - t > end_tol {
        let mut dt = tau.min(horizon - t);
        let step = loop {
            match classical_step(grid, &n, sigma, dt) {
                Ok(s) if s.cfl <= cfg.cfl_max => break Ok(s),
                Ok(_) => dt *= 0.5,
                Err(e) => break Err(e),
            }
            if dt < cfg.tau_min {
                break Err(Error::StepFailed {
                    t,
                    halvings: 0,
                    reason: "drift CFL condition".into(),
                });
            }
        };
        let step = match step {
            Ok(s) => s,
            Err(Error::StepFailed { .. }) => {
                fire(&mut report, t, BlowupTrigger::StepCollapse, None);
                break;
            }
            Err(e) => {
                fire(&mut report, t, BlowupTrigger::SolverFailure, Some(e.to_string()));
                break;
            }
        };
        t = if horizon - (t + dt) <= end_tol {
            horizon
        } else {
            t + dt
        };
        k += 1;
        tau = if dt < cfg.tau {
            (2.0 * dt).min(cfg.tau)
        } else {
            cfg.tau
        };
        let state = DensityState::from_density(grid, &step.n)?;
        let mut rep = StepReport::for_state(grid, &state)?;
        rep.tau = dt;
        rep.clipped_mass = step.clipped_mass;
        report.max_n_trace.push(rep.max_n);
        let over = rep.max_n > cap;
        traj.times.push(t);
        traj.reports.push(rep);
        let snap = Snapshot {
            t,
            state,
            f: None,
            phi: step.phi,
        };
        if snapshot_every > 0 && k % snapshot_every == 0 {
            traj.snapshots.push(snap);
            pending = None;
        } else {
            pending = Some(snap);
        }
        n = step.n;
        if over {
            fire(&mut report, t, BlowupTrigger::MaxDensity, None);
            break;
        }
    }
    if let Some(s) = pending {
        traj.snapshots.push(s);
    }
    Ok((traj, report))
}

/// Trajectory CSV with a terminal `blowup` row when the detector fired.
pub fn classical_timeseries_csv(traj: &Trajectory, report: &BlowupReport) -> String {
    let mut out = timeseries_csv(traj);
    if let (true, Some(t), Some(trigger)) = (report.blew_up, report.t_detect, report.trigger) {
        let _ = writeln!(out, "blowup,{},{:?},,,,,,", format_sig17(t), trigger);
    }
    out
}
