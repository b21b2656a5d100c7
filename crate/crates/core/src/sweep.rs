//! Batch runs over `(σ, ε)` grids and τ-refinement studies.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{classical_timeseries_csv, evolve_classical, BlowupReport, ClassicalConfig};
use crate::error::{Error, Result};
use crate::grid::{build_grid, DensityState, Geometry, Grid};
use crate::profiles::{profile, Doping};
use crate::scheme::{evolve_partial, ModelParams, StepConfig};
use crate::trajectory::{snapshot_csv, timeseries_csv, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    BlowupDetected,
    StepFailed,
}

/// One simulation: quantum for `ε > 0`, classical for `ε = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub epsilon: f64,
    pub sigma: f64,
    pub doping: Doping,
    pub step: StepConfig,
    pub classical: ClassicalConfig,
    pub horizon: f64,
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    pub t_detect: Option<f64>,
    pub reason: Option<String>,
    pub blowup: Option<BlowupReport>,
}

impl ExperimentResult {
    pub fn timeseries_csv(&self) -> String {
        match &self.blowup {
            Some(b) => classical_timeseries_csv(&self.trajectory, b),
            None => timeseries_csv(&self.trajectory),
        }
    }

    /// `timeseries.csv`, `snapshots/snapshot_NNNNN.csv` and, for classical
    /// runs, `blowup.json` under `dir`.
    pub fn write(&self, dir: &Path, grid: &Grid) -> Result<()> {
        let snaps = dir.join("snapshots");
        std::fs::create_dir_all(&snaps).map_err(|e| Error::io(&snaps, e))?;
        let ts = dir.join("timeseries.csv");
        std::fs::write(&ts, self.timeseries_csv()).map_err(|e| Error::io(&ts, e))?;
        for (k, s) in self.trajectory.snapshots.iter().enumerate() {
            let p = snaps.join(format!("snapshot_{k:05}.csv"));
            std::fs::write(&p, snapshot_csv(grid, s)).map_err(|e| Error::io(&p, e))?;
        }
        if let Some(b) = &self.blowup {
            let p = dir.join("blowup.json");
            let text = serde_json::to_string_pretty(b)?;
            std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Runs the experiment; only invalid input is an error, solver failures are
/// reported in the outcome.
pub fn run_experiment(grid: &Grid, n0: &DensityState, e: &Experiment) -> Result<ExperimentResult> {
    if e.epsilon == 0.0 {
        let (trajectory, report) =
            evolve_classical(grid, n0, e.sigma, &e.classical, e.horizon, e.snapshot_every)?;
        let outcome = if report.blew_up {
            Outcome::BlowupDetected
        } else {
            Outcome::Completed
        };
        return Ok(ExperimentResult {
            trajectory,
            outcome,
            t_detect: report.t_detect,
            reason: report.reason.clone(),
            blowup: Some(report),
        });
    }
    let params = ModelParams {
        epsilon: e.epsilon,
        sigma: e.sigma,
        doping: e.doping.values(grid),
    };
    params.validate(grid)?;
    e.step.validate()?;
    let (trajectory, err) = evolve_partial(grid, n0, &params, &e.step, e.horizon, e.snapshot_every);
    Ok(match err {
        None => ExperimentResult {
            trajectory,
            outcome: Outcome::Completed,
            t_detect: None,
            reason: None,
            blowup: None,
        },
        Some(err @ Error::StepFailed { .. }) => ExperimentResult {
            trajectory,
            outcome: Outcome::StepFailed,
            t_detect: None,
            reason: Some(err.to_string()),
            blowup: None,
        },
        Some(err) => return Err(err),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub sigmas: Vec<f64>,
    /// `0` routes the run to the classical model.
    pub epsilons: Vec<f64>,
    pub d: usize,
    pub geometry: Geometry,
    pub nodes: usize,
    #[serde(default = "unit")]
    pub length: f64,
    pub tau: f64,
    pub horizon: f64,
    /// Initial profile id.
    pub initial: String,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Detector cap of classical runs; `None` keeps the classical default.
    #[serde(default)]
    pub max_density_cap: Option<f64>,
    #[serde(default)]
    pub snapshot_every: usize,
}

fn unit() -> f64 {
    1.0
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::config("sweep.sigmas", "must not be empty"));
        }
        if self.epsilons.is_empty() {
            return Err(Error::config("sweep.epsilons", "must not be empty"));
        }
        if self.sigmas.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("sweep.sigmas", "values must be finite"));
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::config("sweep.epsilons", "values must be nonnegative"));
        }
        if !(self.tau > 0.0 && self.horizon > 0.0) {
            return Err(Error::config("sweep.tau", "tau and horizon must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("sweep.threads", "must be at least 1"));
        }
        self.grid()
            .map_err(|e| Error::config("sweep.grid", e.to_string()))?;
        profile(&self.initial)
            .map_err(|_| Error::config("sweep.initial", format!("unknown profile `{}`", self.initial)))?;
        let mut ids: Vec<String> = self.tuples().iter().map(|t| t.id()).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("sweep", "duplicate (sigma, epsilon) pairs"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.d, self.geometry, self.nodes, self.length)
    }

    pub fn tuples(&self) -> Vec<RunParams> {
        let mut out = Vec::new();
        for &sigma in &self.sigmas {
            for &epsilon in &self.epsilons {
                out.push(RunParams {
                    sigma,
                    epsilon,
                    geometry: self.geometry,
                    d: self.d,
                    nodes: self.nodes,
                    length: self.length,
                    tau: self.tau,
                    horizon: self.horizon,
                    initial: self.initial.clone(),
                    seed: self.seed,
                });
            }
        }
        out
    }
}

/// The full parameter tuple of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub sigma: f64,
    pub epsilon: f64,
    pub geometry: Geometry,
    pub d: usize,
    pub nodes: usize,
    pub length: f64,
    pub tau: f64,
    pub horizon: f64,
    pub initial: String,
    pub seed: u64,
}

impl RunParams {
    /// Directory-safe id, unique per `(σ, ε)` within a sweep.
    pub fn id(&self) -> String {
        format!("sigma{:+.6e}_eps{:.6e}", self.sigma, self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub entropy: f64,
    pub min_n: f64,
    pub max_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub params: RunParams,
    pub outcome: Outcome,
    pub t_detect: Option<f64>,
    pub terminal: Option<TerminalDiagnostics>,
    pub reason: Option<String>,
    pub wall_time_s: f64,
}

fn terminal(traj: &Trajectory) -> Option<TerminalDiagnostics> {
    let r = traj.reports.last()?;
    Some(TerminalDiagnostics {
        t: traj.final_time(),
        mass: r.mass,
        entropy: r.entropy,
        min_n: r.min_n,
        max_n: r.max_n,
    })
}

fn execute(spec: &SweepSpec, grid: &Grid, p: &RunParams) -> RunRecord {
    let start = Instant::now();
    let id = p.id();
    let result = (|| -> Result<ExperimentResult> {
        let n0 = profile(&p.initial)?.state(grid)?;
        let e = Experiment {
            epsilon: p.epsilon,
            sigma: p.sigma,
            doping: Doping::None,
            step: StepConfig::with_tau(p.tau),
            classical: ClassicalConfig {
                tau: p.tau,
                max_density_cap: spec.max_density_cap,
                ..ClassicalConfig::default()
            },
            horizon: p.horizon,
            snapshot_every: spec.snapshot_every,
        };
        let r = run_experiment(grid, &n0, &e)?;
        r.write(&spec.out_dir.join(&id), grid)?;
        Ok(r)
    })();
    let wall_time_s = start.elapsed().as_secs_f64();
    match result {
        Ok(r) => RunRecord {
            id,
            params: p.clone(),
            outcome: r.outcome,
            t_detect: r.t_detect,
            terminal: terminal(&r.trajectory),
            reason: r.reason,
            wall_time_s,
        },
        Err(e) => RunRecord {
            id,
            params: p.clone(),
            outcome: Outcome::StepFailed,
            t_detect: None,
            terminal: None,
            reason: Some(e.to_string()),
            wall_time_s,
        },
    }
}

/// Records as JSON lines, sorted by id.
pub fn records_jsonl(records: &[RunRecord]) -> Result<String> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = String::new();
    for r in sorted {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Executes every `(σ, ε)` pair and writes `runs.jsonl` plus one directory
/// per run under `spec.out_dir`. Failures inside a run become `StepFailed`
/// records; only failing to write `runs.jsonl` is an error.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let grid = spec.grid()?;
    std::fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;
    let tuples = spec.tuples();
    let work = || -> Vec<RunRecord> { tuples.par_iter().map(|p| execute(spec, &grid, p)).collect() };
    let mut records = match spec.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work),
        None => work(),
    };
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let path = spec.out_dir.join("runs.jsonl");
    std::fs::write(&path, records_jsonl(&records)?).map_err(|e| Error::io(&path, e))?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTable {
    pub taus: Vec<f64>,
    /// `‖n_j(T) - n_{j+1}(T)‖₂` for consecutive levels.
    pub distances: Vec<f64>,
    /// Least-squares slope of `log distance` against `log τ`.
    pub order: Option<f64>,
    pub monotone: bool,
    /// Set when a level failed; the table holds the levels before it.
    pub failure: Option<String>,
}

/// Runs `evolve` with `τ₀/2^j`, `j < levels`, and compares the densities at
/// `horizon`.
pub fn tau_refinement_study(
    grid: &Grid,
    n0: &DensityState,
    params: &ModelParams,
    base: &StepConfig,
    tau0: f64,
    levels: usize,
    horizon: f64,
) -> Result<RefinementTable> {
    if levels < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 levels, got {levels}"
        )));
    }
    if !(tau0 > 0.0 && tau0 <= horizon) {
        return Err(Error::InvalidArgument("tau0 must lie in (0, horizon]".into()));
    }
    let taus: Vec<f64> = (0..levels).map(|j| tau0 / f64::powi(2.0, j as i32)).collect();
    let runs: Vec<std::result::Result<Vec<f64>, String>> = taus
        .par_iter()
        .map(|&tau| {
            let cfg = StepConfig { tau, ..base.clone() };
            let (traj, err) = evolve_partial(grid, n0, params, &cfg, horizon, 0);
            match (err, traj.final_state()) {
                (None, Some(s)) => Ok(s.density()),
                (Some(e), _) => Err(format!("tau = {tau:e}: {e}")),
                (None, None) => Err(format!("tau = {tau:e}: empty trajectory")),
            }
        })
        .collect();
    let mut finals = Vec::new();
    let mut failure = None;
    for r in runs {
        match r {
            Ok(n) => finals.push(n),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let distances: Vec<f64> = finals
        .windows(2)
        .map(|w| {
            let diff: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect();
            grid.l2_norm(&diff)
        })
        .collect();
    let order = (distances.len() >= 2)
        .then(|| crate::diagnostics::fitted_order(&taus[..distances.len()], &distances));
    Ok(RefinementTable {
        taus: taus[..finals.len()].to_vec(),
        monotone: distances.windows(2).all(|w| w[1] < w[0]),
        distances,
        order,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::InitialProfile;
    use std::f64::consts::PI;

    fn small_spec(dir: &Path) -> SweepSpec {
        SweepSpec {
            sigmas: vec![0.0, 4.0 * PI],
            epsilons: vec![0.0, 0.1],
            d: 1,
            geometry: Geometry::Slab,
            nodes: 41,
            length: 1.0,
            tau: 1e-3,
            horizon: 0.01,
            initial: "cosine".into(),
            seed: 0,
            out_dir: dir.to_path_buf(),
            threads: Some(2),
            max_density_cap: None,
            snapshot_every: 5,
        }
    }

    fn strip_wall_time(text: &str) -> Vec<serde_json::Value> {
        text.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_time_s");
                v
            })
            .collect()
    }

    #[test]
    fn sweep_writes_records_and_reruns_identically() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec(dir.path());
        let recs = run_sweep(&spec).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.outcome == Outcome::Completed));
        let first = std::fs::read_to_string(dir.path().join("runs.jsonl")).unwrap();
        for r in &recs {
            assert!(dir.path().join(&r.id).join("timeseries.csv").exists());
            assert!(dir
                .path()
                .join(&r.id)
                .join("snapshots/snapshot_00000.csv")
                .exists());
        }
        let serial = SweepSpec {
            threads: Some(1),
            ..spec
        };
        run_sweep(&serial).unwrap();
        let second = std::fs::read_to_string(dir.path().join("runs.jsonl")).unwrap();
        assert_eq!(strip_wall_time(&first), strip_wall_time(&second));
    }

    #[test]
    fn empty_sigma_list_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SweepSpec {
            sigmas: vec![],
            ..small_spec(dir.path())
        };
        assert!(matches!(run_sweep(&spec), Err(Error::Config { .. })));
    }

    #[test]
    fn refinement_needs_three_levels() {
        let g = build_grid(1, Geometry::Slab, 21, 1.0).unwrap();
        let n0 = InitialProfile::Uniform.state(&g).unwrap();
        let p = ModelParams::new(0.1, 0.0);
        assert!(tau_refinement_study(&g, &n0, &p, &StepConfig::default(), 1e-3, 1, 0.01).is_err());
    }

    #[test]
    fn refinement_is_first_order() {
        let g = build_grid(1, Geometry::Slab, 101, 1.0).unwrap();
        let n0 = InitialProfile::Cosine {
            amplitude: 0.5,
            mode: 1,
        }
        .state(&g)
        .unwrap();
        let p = ModelParams::new(0.1, 0.0);
        let t = tau_refinement_study(&g, &n0, &p, &StepConfig::default(), 4e-3, 3, 0.04).unwrap();
        assert!(t.monotone && t.failure.is_none());
        let order = t.order.unwrap();
        assert!((0.8..=1.3).contains(&order), "{order}");
    }
}
