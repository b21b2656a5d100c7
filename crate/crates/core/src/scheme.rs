//! Implicit Euler step for the quantum drift-diffusion system and the
//! trajectory driver.
//!
//! One step solves, for the unknown density `n = e^y / ∫e^y`,
//!
//! ```text
//! -div(n ∇F)                          = (w - n)/τ
//! -(ε²/2)(Δy + |∇y|²/2) + y           = σΦ + F
//! -ΔΦ                                 = n - C
//! ```
//!
//! with zero flux for `F, y` and `Φ = 0` on the boundary. A solution is a
//! fixed point of the composed map `v ↦ y` (Poisson, weighted Neumann,
//! exponential elliptic). Two solvers are provided:
//!
//! * [`StepSolver::Picard`] iterates that map with relaxation and a
//!   λ-continuation ladder. The linearized map has eigenvalues of size
//!   `1/(τ k²)` on smooth modes, so plain substitution only contracts for
//!   large `τ`.
//! * [`StepSolver::Newton`] (default) applies Newton's method to the coupled
//!   system in `(y, F, Φ)` and a normalization constant, then certifies the
//!   result by evaluating the composed map once.

use serde::{Deserialize, Serialize};

use crate::banded::{solve_banded, BandedMatrix};
use crate::diagnostics::{entropy, entropy_report, hessian_l2};
use crate::elliptic::{
    exponential_newton_correction, exponential_residual, face_average, solve_exponential_elliptic_from,
    solve_poisson_dirichlet, solve_weighted_neumann, NewtonConfig,
};
use crate::error::{Error, Result};
use crate::grid::{gradient, Bc, DensityState, Grid, ScalarField};
use crate::inequality::gamma_for_dimension;
use crate::trajectory::{DissipationCheck, Snapshot, StepReport, Trajectory};

/// Slack allowed in the dissipation check before it is reported as violated.
pub const DISSIPATION_SLACK: f64 = 1e-8;

/// Relative floor for the logarithm of the initial iterate.
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub epsilon: f64,
    pub sigma: f64,
    /// Doping profile `C`, one value per node. `None` means `C ≡ 0`.
    #[serde(default)]
    pub doping: Option<Vec<f64>>,
}

impl ModelParams {
    pub fn new(epsilon: f64, sigma: f64) -> Self {
        Self {
            epsilon,
            sigma,
            doping: None,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !self.sigma.is_finite() {
            return Err(Error::InvalidArgument("sigma must be finite".into()));
        }
        if let Some(c) = &self.doping {
            grid.check(c)?;
        }
        Ok(())
    }

    pub fn doping_values(&self, grid: &Grid) -> Vec<f64> {
        self.doping.clone().unwrap_or_else(|| vec![0.0; grid.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSolver {
    Newton,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub tau: f64,
    pub picard_max: usize,
    /// Sup-norm tolerance on the fixed-point update `‖y - v‖∞`.
    pub picard_tol: f64,
    /// Initial relaxation ω of the Picard update; halved when the update grows.
    pub relaxation: f64,
    /// λ values tried in order when the direct solve at λ = 1 fails.
    pub continuation: Option<Vec<f64>>,
    pub newton: NewtonConfig,
    pub solver: StepSolver,
    pub max_halvings: u32,
    /// δ used to pick the coercivity constant γ of the dissipation check.
    pub delta: f64,
    /// Right-hand side of the dissipation check.
    pub entropy_budget: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            picard_max: 200,
            picard_tol: 1e-8,
            relaxation: 1.0,
            continuation: Some(vec![0.25, 0.5, 0.75, 1.0]),
            newton: NewtonConfig::default(),
            solver: StepSolver::Newton,
            max_halvings: 10,
            delta: 0.05,
            entropy_budget: 0.0,
        }
    }
}

impl StepConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidArgument("picard_tol must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidArgument("relaxation must lie in (0, 1]".into()));
        }
        if self.picard_max == 0 {
            return Err(Error::InvalidArgument("picard_max must be at least 1".into()));
        }
        if let Some(ladder) = &self.continuation {
            let ok = !ladder.is_empty()
                && ladder.iter().all(|l| *l > 0.0 && *l <= 1.0)
                && ladder.windows(2).all(|w| w[0] < w[1])
                && *ladder.last().unwrap() == 1.0;
            if !ok {
                return Err(Error::InvalidArgument(
                    "continuation ladder must increase within (0, 1] and end at 1".into(),
                ));
            }
        }
        self.newton.validate()
    }
}

/// Result of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: DensityState,
    pub f: ScalarField,
    pub phi: ScalarField,
    pub y: ScalarField,
    pub report: StepReport,
}

/// One evaluation of the composed map at iterate `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapOutput {
    pub y: ScalarField,
    pub f: ScalarField,
    pub phi: ScalarField,
    pub newton_iterations: usize,
}

fn normalized_exp(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - vmax).exp()).collect();
    let m = grid.integrate_values(&e);
    e.into_iter().map(|x| x / m).collect()
}

/// `log ∫ e^v dx`, computed without overflow.
fn log_integral_exp(grid: &Grid, v: &[f64]) -> f64 {
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - vmax).exp()).collect();
    vmax + grid.integrate_values(&e).ln()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// The composed map `v ↦ y` at homotopy parameter λ.
pub fn fixed_point_map(
    grid: &Grid,
    w: &[f64],
    v: &[f64],
    params: &ModelParams,
    tau: f64,
    lambda: f64,
    newton: &NewtonConfig,
) -> Result<MapOutput> {
    grid.check(w)?;
    grid.check(v)?;
    let c = params.doping_values(grid);
    let n_v = normalized_exp(grid, v);
    let source: Vec<f64> = n_v.iter().zip(&c).map(|(n, c)| lambda * (n - c)).collect();
    let phi = solve_poisson_dirichlet(grid, &ScalarField::new(source, Bc::None))?;
    let f_src: Vec<f64> = w.iter().zip(&n_v).map(|(w, n)| lambda * (w - n) / tau).collect();
    let f = solve_weighted_neumann(
        grid,
        &ScalarField::new(n_v, Bc::NeumannZero),
        &ScalarField::new(f_src, Bc::NeumannZero),
        0.0,
    )?;
    let g: Vec<f64> = phi
        .values
        .iter()
        .zip(&f.values)
        .map(|(p, f)| params.sigma * p + f)
        .collect();
    let (y, rep) = solve_exponential_elliptic_from(
        grid,
        &ScalarField::new(g, Bc::NeumannZero),
        params.epsilon,
        newton,
        v,
    )?;
    Ok(MapOutput {
        y,
        f,
        phi,
        newton_iterations: rep.iterations,
    })
}

fn initial_log(w: &[f64]) -> Vec<f64> {
    floored_log(w, LOG_FLOOR)
}

fn floored_log(w: &[f64], relative_floor: f64) -> Vec<f64> {
    let wmax = w.iter().cloned().fold(0.0, f64::max);
    let floor = relative_floor * wmax;
    w.iter().map(|&x| x.max(floor).ln()).collect()
}

/// Unknowns of the coupled Newton solve; `n = e^{y - c}`.
#[derive(Debug, Clone)]
struct Coupled {
    y: Vec<f64>,
    f: Vec<f64>,
    phi: Vec<f64>,
    c: f64,
}

struct CoupledProblem<'a> {
    grid: &'a Grid,
    w: &'a [f64],
    doping: Vec<f64>,
    eps: f64,
    sigma: f64,
    tau: f64,
    lambda: f64,
}

/// Largest density in the stencil of node `i`.
fn local_scale(n: &[f64], i: usize) -> f64 {
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(n.len() - 1);
    n[lo..=hi].iter().cloned().fold(f64::MIN_POSITIVE, f64::max)
}

const KL: usize = 4;
const KU: usize = 4;

impl CoupledProblem<'_> {
    fn density(&self, x: &Coupled) -> Vec<f64> {
        x.y.iter().map(|y| (y - x.c).exp()).collect()
    }

    /// Residual rows interleaved per node as (y-equation, F-equation,
    /// Φ-equation), followed by the normalization residual. The F-equation at
    /// node 0 is replaced by the pin `F₀ = 0`; the others are multiplied by τ
    /// and divided by the local density, so they measure relative mass
    /// balance and stay meaningful where `n` is tiny.
    fn scales(&self, x: &Coupled) -> Vec<f64> {
        let n = self.density(x);
        (0..n.len()).map(|i| local_scale(&n, i)).collect()
    }

    fn residual(&self, x: &Coupled, scales: &[f64]) -> (Vec<f64>, f64) {
        let grid = self.grid;
        let n_nodes = grid.len();
        let n = self.density(x);
        let g: Vec<f64> = x.phi.iter().zip(&x.f).map(|(p, f)| self.sigma * p + f).collect();
        let rb = exponential_residual(grid, &x.y, &g, self.eps);
        let ra = grid.neg_div_flux(&face_average(&n), &x.f);
        let rc = grid.neg_div_flux(&vec![1.0; n_nodes - 1], &x.phi);
        let mut r = vec![0.0; 3 * n_nodes];
        for i in 0..n_nodes {
            r[3 * i] = rb[i];
            r[3 * i + 1] = if i == 0 {
                x.f[0]
            } else {
                (self.tau * ra[i] - self.lambda * (self.w[i] - n[i])) / scales[i]
            };
            r[3 * i + 2] = if grid.is_dirichlet_node(i) {
                x.phi[i]
            } else {
                rc[i] - self.lambda * (n[i] - self.doping[i])
            };
        }
        let rn = grid.integrate_values(&n) - 1.0;
        (r, rn)
    }

    /// Jacobian split as banded block `B`, border column `∂R/∂c`, border row
    /// `∂R_N/∂x` and corner `∂R_N/∂c`.
    fn jacobian(&self, x: &Coupled, scales: &[f64]) -> Result<(BandedMatrix, Vec<f64>, Vec<f64>, f64)> {
        let grid = self.grid;
        let nn = grid.len();
        let h = grid.h();
        let n = self.density(x);
        let half_eps2 = 0.5 * self.eps * self.eps;
        let (ll, ld, lu) = grid.neg_div_stencil(&vec![1.0; nn - 1]);
        let grad = gradient(grid, &ScalarField::new(x.y.clone(), Bc::NeumannZero))?;
        let faces = grid.faces();
        let vols = grid.weights();

        let mut b = BandedMatrix::new(3 * nn, KL, KU);
        let mut col_c = vec![0.0; 3 * nn];
        let mut row_n = vec![0.0; 3 * nn];
        let yi = |i: usize| 3 * i;
        let fi = |i: usize| 3 * i + 1;
        let pi = |i: usize| 3 * i + 2;

        for i in 0..nn {
            // y-equation
            let r = yi(i);
            b.add(r, yi(i), half_eps2 * ld[i] + 1.0);
            if i > 0 {
                let mut lo = half_eps2 * ll[i];
                if i + 1 < nn {
                    lo += half_eps2 * grad[i] / (2.0 * h);
                }
                b.add(r, yi(i - 1), lo);
            }
            if i + 1 < nn {
                let mut up = half_eps2 * lu[i];
                if i > 0 {
                    up -= half_eps2 * grad[i] / (2.0 * h);
                }
                b.add(r, yi(i + 1), up);
            }
            b.add(r, fi(i), -1.0);
            b.add(r, pi(i), -self.sigma);

            // F-equation
            let r = fi(i);
            if i == 0 {
                b.add(r, fi(0), 1.0);
            } else {
                let scale = scales[i];
                let s = self.tau / (vols[i] * scale);
                if i + 1 < nn {
                    let t = faces[i] / h;
                    let a = 0.5 * (n[i] + n[i + 1]);
                    let df = x.f[i + 1] - x.f[i];
                    b.add(r, fi(i + 1), -s * t * a);
                    b.add(r, fi(i), s * t * a);
                    b.add(r, yi(i), -s * t * 0.5 * n[i] * df);
                    b.add(r, yi(i + 1), -s * t * 0.5 * n[i + 1] * df);
                    col_c[r] += s * t * a * df;
                }
                let t = faces[i - 1] / h;
                let a = 0.5 * (n[i - 1] + n[i]);
                let df = x.f[i] - x.f[i - 1];
                b.add(r, fi(i), s * t * a);
                b.add(r, fi(i - 1), -s * t * a);
                b.add(r, yi(i - 1), s * t * 0.5 * n[i - 1] * df);
                b.add(r, yi(i), s * t * 0.5 * n[i] * df);
                col_c[r] -= s * t * a * df;
                b.add(r, yi(i), self.lambda * n[i] / scale);
                col_c[r] -= self.lambda * n[i] / scale;
            }

            // Φ-equation
            let r = pi(i);
            if grid.is_dirichlet_node(i) {
                b.add(r, pi(i), 1.0);
            } else {
                b.add(r, pi(i), ld[i]);
                if i > 0 {
                    b.add(r, pi(i - 1), ll[i]);
                }
                if i + 1 < nn {
                    b.add(r, pi(i + 1), lu[i]);
                }
                b.add(r, yi(i), -self.lambda * n[i]);
                col_c[r] += self.lambda * n[i];
            }

            row_n[yi(i)] = vols[i] * n[i];
        }
        let corner = -grid.integrate_values(&n);
        Ok((b, col_c, row_n, corner))
    }

    /// Newton's method with sup-norm backtracking. Returns the solution and
    /// the number of linearizations.
    fn solve(&self, mut x: Coupled, cfg: &NewtonConfig) -> Result<(Coupled, usize)> {
        let mut scales = self.scales(&x);
        let (mut r, mut rn) = self.residual(&x, &scales);
        let mut norm = sup_norm(&r).max(rn.abs());
        let mut linearizations = 0;
        for _ in 0..cfg.max_iter {
            if !norm.is_finite() {
                break;
            }
            // the F rows carry a factor τ, so one more step is taken after
            // the tolerance is met to bring them down to round-off
            let was_converged = norm <= cfg.tol_residual;
            let (mut b, mut col_c, row_n, corner) = self.jacobian(&x, &scales)?;
            linearizations += 1;
            // Rows in near-vacuum regions have entries of size n; without
            // equilibration the normwise backward error of the factorization
            // swamps them.
            let mut z1: Vec<f64> = r.iter().map(|v| -v).collect();
            for i in 0..z1.len() {
                let m = b.row_max_abs(i).max(col_c[i].abs());
                if m > 0.0 {
                    b.scale_row(i, 1.0 / m);
                    col_c[i] /= m;
                    z1[i] /= m;
                }
            }
            let lu = b.factor()?;
            lu.solve(&mut z1);
            let mut z2 = col_c;
            lu.solve(&mut z2);
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
            let schur = corner - dot(&row_n, &z2);
            if !(schur.abs() > 0.0) || !schur.is_finite() {
                return Err(Error::SingularSystem(3 * self.grid.len()));
            }
            let dc = (-rn - dot(&row_n, &z1)) / schur;
            let dx: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a - b * dc).collect();

            let mut step = cfg.damping;
            let accepted = loop {
                let mut trial = x.clone();
                for i in 0..self.grid.len() {
                    trial.y[i] += step * dx[3 * i];
                    trial.f[i] += step * dx[3 * i + 1];
                    trial.phi[i] += step * dx[3 * i + 2];
                }
                trial.c += step * dc;
                let (tr, trn) = self.residual(&trial, &scales);
                let tnorm = sup_norm(&tr).max(trn.abs());
                if tnorm.is_finite() && tnorm < (1.0 - 1e-4 * step) * norm {
                    x = trial;
                    break true;
                }
                step *= 0.5;
                if step < cfg.min_step {
                    break false;
                }
            };
            if was_converged {
                return Ok((x, linearizations));
            }
            // the row scaling follows the density; re-measure under the new one
            scales = self.scales(&x);
            (r, rn) = self.residual(&x, &scales);
            norm = sup_norm(&r).max(rn.abs());
            if !accepted {
                break;
            }
        }
        if norm <= cfg.tol_residual {
            return Ok((x, linearizations));
        }
        Err(Error::NewtonDiverged {
            iterations: linearizations,
            residual: norm,
        })
    }

    /// Starting point built from `w` and the current λ. The density is first
    /// smoothed by one implicit heat step of length τ, which is strictly
    /// positive and much closer to the solution when `w` has zeros or jumps.
    fn initial_guess(&self) -> Result<Coupled> {
        let grid = self.grid;
        let n_nodes = grid.len();
        let (lo, di, up) = grid.neg_div_stencil(&vec![1.0; n_nodes - 1]);
        let lo: Vec<f64> = lo.iter().map(|v| self.tau * v).collect();
        let di: Vec<f64> = di.iter().map(|v| 1.0 + self.tau * v).collect();
        let up: Vec<f64> = up.iter().map(|v| self.tau * v).collect();
        let mut smooth = self.w.to_vec();
        solve_banded(BandedMatrix::tridiagonal(&lo, &di, &up), &mut smooth)?;
        // the smoothed density decays geometrically, so only underflow needs
        // guarding
        let y0 = floored_log(&smooth, 1e-250);
        let c0 = log_integral_exp(grid, &y0);
        let n0: Vec<f64> = y0.iter().map(|y| (y - c0).exp()).collect();
        let src: Vec<f64> = n0
            .iter()
            .zip(&self.doping)
            .map(|(n, c)| self.lambda * (n - c))
            .collect();
        let phi = solve_poisson_dirichlet(grid, &ScalarField::new(src, Bc::None))?.values;
        let zero = vec![0.0; grid.len()];
        // F from the y-equation: the residual with g = 0 is -(ε²/2)(...) + y
        let lhs = exponential_residual(grid, &y0, &zero, self.eps);
        let mut f: Vec<f64> = lhs.iter().zip(&phi).map(|(l, p)| l - self.sigma * p).collect();
        let s = -f[0];
        for v in &mut f {
            *v += s;
        }
        Ok(Coupled {
            y: y0.iter().map(|y| y + s).collect(),
            f,
            phi,
            c: c0 + s,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_output(
    grid: &Grid,
    w: &DensityState,
    params: &ModelParams,
    cfg: &StepConfig,
    y: Vec<f64>,
    f: ScalarField,
    phi: ScalarField,
    counters: (usize, usize, f64, bool),
) -> Result<StepOutput> {
    let (picard_iterations, newton_totals, fixed_point_residual, continuation_used) = counters;
    let n = normalized_exp(grid, &y);
    if let Some((node, &value)) = n.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { node, value });
    }
    let state = DensityState::from_normalized_rho(n.iter().map(|v| v.sqrt()).collect());
    let e = entropy_report(grid, &state)?;
    let gamma = gamma_for_dimension(grid.dim(), cfg.delta)?;
    let dissipation =
        discrete_entropy_inequality(grid, w, &state, cfg.tau, params, gamma, cfg.entropy_budget)?;
    let report = StepReport {
        tau: cfg.tau,
        picard_iterations,
        newton_totals,
        mass: e.mass,
        entropy: e.entropy,
        fisher: e.fisher,
        hessian_l2: e.hessian_l2,
        min_n: e.min_n,
        max_n: e.max_n,
        dissipation,
        gauge_shift: log_integral_exp(grid, &y),
        fixed_point_residual,
        continuation_used,
        clipped_mass: 0.0,
    };
    Ok(StepOutput {
        state,
        f,
        phi,
        y: ScalarField::new(y, Bc::NeumannZero),
        report,
    })
}

fn step_newton(grid: &Grid, w: &DensityState, params: &ModelParams, cfg: &StepConfig) -> Result<StepOutput> {
    let wn = w.density();
    let mut problem = CoupledProblem {
        grid,
        w: &wn,
        doping: params.doping_values(grid),
        eps: params.epsilon,
        sigma: params.sigma,
        tau: cfg.tau,
        lambda: 1.0,
    };
    let mut linearizations = 0;
    let mut continuation_used = false;
    let direct = problem
        .initial_guess()
        .and_then(|x0| problem.solve(x0, &cfg.newton));
    let solution = match direct {
        Ok((x, its)) => {
            linearizations += its;
            x
        }
        Err(err) => {
            let Some(ladder) = &cfg.continuation else {
                return Err(err);
            };
            continuation_used = true;
            problem.lambda = ladder[0];
            let mut x = problem.initial_guess()?;
            for &lambda in ladder {
                problem.lambda = lambda;
                let (next, its) = problem.solve(x, &cfg.newton)?;
                linearizations += its;
                x = next;
            }
            x
        }
    };

    let mut x = solution;
    let shift = -grid.mean(&x.f);
    for i in 0..grid.len() {
        x.f[i] += shift;
        x.y[i] += shift;
    }

    // certify with one pass of the composed map
    let map = fixed_point_map(grid, &wn, &x.y, params, cfg.tau, 1.0, &cfg.newton)?;
    // the inner solve may accept `y` as is, so the Newton correction is
    // measured as well
    let g: Vec<f64> = map
        .phi
        .values
        .iter()
        .zip(&map.f.values)
        .map(|(p, f)| params.sigma * p + f)
        .collect();
    let correction =
        exponential_newton_correction(grid, &x.y, &ScalarField::new(g, Bc::NeumannZero), params.epsilon)?;
    let residual = sup_diff(&map.y.values, &x.y).max(sup_norm(&correction));
    if !(residual <= cfg.picard_tol) {
        return Err(Error::PicardDiverged {
            iterations: linearizations,
            update: residual,
        });
    }
    let f = ScalarField::new(x.f, Bc::NeumannZero);
    let phi = ScalarField::new(x.phi, Bc::DirichletZero);
    assemble_output(
        grid,
        w,
        params,
        cfg,
        x.y,
        f,
        phi,
        (
            linearizations,
            linearizations + map.newton_iterations,
            residual,
            continuation_used,
        ),
    )
}

struct PicardState {
    v: Vec<f64>,
    last: MapOutput,
    update: f64,
    iterations: usize,
    newton: usize,
}

fn picard_at_lambda(
    grid: &Grid,
    wn: &[f64],
    v0: Vec<f64>,
    params: &ModelParams,
    cfg: &StepConfig,
    lambda: f64,
) -> std::result::Result<PicardState, (usize, f64, usize)> {
    let mut v = v0;
    let mut omega = cfg.relaxation;
    let mut prev = f64::INFINITY;
    let mut newton = 0;
    let mut update = f64::INFINITY;
    for k in 1..=cfg.picard_max {
        let out = match fixed_point_map(grid, wn, &v, params, cfg.tau, lambda, &cfg.newton) {
            Ok(o) => o,
            Err(_) => return Err((k, update, newton)),
        };
        newton += out.newton_iterations;
        update = sup_diff(&out.y.values, &v);
        if !update.is_finite() {
            return Err((k, update, newton));
        }
        if update <= cfg.picard_tol {
            return Ok(PicardState {
                v: out.y.values.clone(),
                last: out,
                update,
                iterations: k,
                newton,
            });
        }
        if update > prev {
            omega = (0.5 * omega).max(1.0 / 1024.0);
        }
        prev = update;
        for (vi, yi) in v.iter_mut().zip(&out.y.values) {
            *vi = (1.0 - omega) * *vi + omega * yi;
        }
    }
    Err((cfg.picard_max, update, newton))
}

fn step_picard(grid: &Grid, w: &DensityState, params: &ModelParams, cfg: &StepConfig) -> Result<StepOutput> {
    let wn = w.density();
    let v0 = initial_log(&wn);
    let mut iterations = 0;
    let mut newton = 0;
    let mut continuation_used = false;
    let state = match picard_at_lambda(grid, &wn, v0.clone(), params, cfg, 1.0) {
        Ok(s) => s,
        Err((its, update, nt)) => {
            iterations += its;
            newton += nt;
            let Some(ladder) = &cfg.continuation else {
                return Err(Error::PicardDiverged { iterations, update });
            };
            continuation_used = true;
            let mut v = v0;
            let mut last = None;
            for &lambda in ladder {
                match picard_at_lambda(grid, &wn, v, params, cfg, lambda) {
                    Ok(s) => {
                        iterations += s.iterations;
                        newton += s.newton;
                        v = s.v.clone();
                        last = Some(s);
                    }
                    Err((its, update, _)) => {
                        return Err(Error::PicardDiverged {
                            iterations: iterations + its,
                            update,
                        })
                    }
                }
            }
            let mut s = last.expect("ladder is nonempty");
            s.iterations = 0;
            s.newton = 0;
            s
        }
    };
    iterations += state.iterations;
    newton += state.newton;
    assemble_output(
        grid,
        w,
        params,
        cfg,
        state.v,
        state.last.f,
        state.last.phi,
        (iterations, newton, state.update, continuation_used),
    )
}

/// One implicit Euler step from `w` with time step `cfg.tau`.
pub fn step(grid: &Grid, w: &DensityState, params: &ModelParams, cfg: &StepConfig) -> Result<StepOutput> {
    grid.check(&w.rho().values)?;
    params.validate(grid)?;
    cfg.validate()?;
    match cfg.solver {
        StepSolver::Newton => step_newton(grid, w, params, cfg),
        StepSolver::Picard => step_picard(grid, w, params, cfg),
    }
}

/// `lhs = (E(next) - E(prev))/τ + 2γε²‖∇²ρ_next‖²`, `rhs = budget`.
pub fn discrete_entropy_inequality(
    grid: &Grid,
    prev: &DensityState,
    next: &DensityState,
    tau: f64,
    params: &ModelParams,
    gamma: f64,
    budget: f64,
) -> Result<DissipationCheck> {
    grid.check(&prev.rho().values)?;
    grid.check(&next.rho().values)?;
    let de = entropy(grid, &next.density())? - entropy(grid, &prev.density())?;
    let k = hessian_l2(grid, next.rho())?;
    let lhs = de / tau + 2.0 * gamma * params.epsilon * params.epsilon * k;
    Ok(DissipationCheck {
        lhs,
        rhs: budget,
        holds: lhs <= budget + DISSIPATION_SLACK,
    })
}

fn retryable(err: &Error) -> bool {
    matches!(
        err,
        Error::PicardDiverged { .. }
            | Error::NewtonDiverged { .. }
            | Error::SingularSystem(_)
            | Error::CoefficientNotPositive { .. }
            | Error::SolvabilityViolation { .. }
            | Error::NonPositive { .. }
    )
}

fn initial_snapshot(grid: &Grid, state: &DensityState, params: &ModelParams) -> Result<Snapshot> {
    let c = params.doping_values(grid);
    let src: Vec<f64> = state.density().iter().zip(&c).map(|(n, c)| n - c).collect();
    let phi = solve_poisson_dirichlet(grid, &ScalarField::new(src, Bc::None))?;
    Ok(Snapshot {
        t: 0.0,
        state: state.clone(),
        f: None,
        phi,
    })
}

/// Runs the recursion up to `horizon`, returning whatever was computed and
/// the error that stopped it early, if any.
///
/// Failed steps are retried with `τ/2`, up to `cfg.max_halvings` times; after
/// a successful reduced step the time step is allowed to double back towards
/// `cfg.tau`. The final step is shortened to land exactly on `horizon`.
pub fn evolve_partial(
    grid: &Grid,
    n0: &DensityState,
    params: &ModelParams,
    cfg: &StepConfig,
    horizon: f64,
    snapshot_every: usize,
) -> (Trajectory, Option<Error>) {
    let mut traj = Trajectory::default();
    let setup = (|| -> Result<Snapshot> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        grid.check(&n0.rho().values)?;
        params.validate(grid)?;
        cfg.validate()?;
        let first = initial_snapshot(grid, n0, params)?;
        traj.times.push(0.0);
        traj.reports.push(StepReport::for_state(grid, n0)?);
        Ok(first)
    })();
    let first = match setup {
        Ok(s) => s,
        Err(e) => return (traj, Some(e)),
    };
    traj.snapshots.push(first);

    let mut state = n0.clone();
    let mut t = 0.0;
    let mut tau = cfg.tau;
    let mut k = 0usize;
    let mut last_snapshot: Option<Snapshot> = None;
    let end_tol = 1e-12 * horizon;
    while horizon - t > end_tol {
        let mut halvings = 0u32;
        let out = loop {
            let dt = tau.min(horizon - t);
            let step_cfg = StepConfig {
                tau: dt,
                ..cfg.clone()
            };
            match step(grid, &state, params, &step_cfg) {
                Ok(out) => break out,
                Err(e) if retryable(&e) && halvings < cfg.max_halvings => {
                    halvings += 1;
                    tau = 0.5 * dt;
                }
                Err(e) => {
                    let err = if retryable(&e) {
                        Error::StepFailed {
                            t,
                            halvings,
                            reason: e.to_string(),
                        }
                    } else {
                        e
                    };
                    if let Some(s) = last_snapshot.take() {
                        traj.snapshots.push(s);
                    }
                    return (traj, Some(err));
                }
            }
        };
        let dt = out.report.tau;
        t = if horizon - (t + dt) <= end_tol {
            horizon
        } else {
            t + dt
        };
        k += 1;
        if dt < cfg.tau {
            tau = (2.0 * dt).min(cfg.tau);
        }
        let snap = Snapshot {
            t,
            state: out.state.clone(),
            f: Some(out.f),
            phi: out.phi,
        };
        traj.times.push(t);
        traj.reports.push(out.report);
        state = out.state;
        if snapshot_every > 0 && k % snapshot_every == 0 {
            traj.snapshots.push(snap);
            last_snapshot = None;
        } else {
            last_snapshot = Some(snap);
        }
    }
    if let Some(s) = last_snapshot {
        traj.snapshots.push(s);
    }
    (traj, None)
}

/// As [`evolve_partial`], failing with the first unrecoverable error.
pub fn evolve(
    grid: &Grid,
    n0: &DensityState,
    params: &ModelParams,
    cfg: &StepConfig,
    horizon: f64,
    snapshot_every: usize,
) -> Result<Trajectory> {
    match evolve_partial(grid, n0, params, cfg, horizon, snapshot_every) {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}
