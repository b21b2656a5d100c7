//! The three elliptic problems behind one time step:
//!
//! * `-ΔΦ = s` with `Φ = 0` on the boundary,
//! * `-div(a ∇F) = f` with zero flux and a prescribed mean,
//! * `-(ε²/2)(Δy + |∇y|²/2) + y = g` with zero flux, solved by damped Newton.
//!
//! All three use the flux-form stencil of [`Grid`] and banded direct solves.

use serde::{Deserialize, Serialize};

use crate::banded::{solve_banded, BandedMatrix};
use crate::error::{Error, Result};
use crate::grid::{gradient, Bc, Grid, ScalarField};

/// Default tolerance on `|∫ f dx|` for the Neumann compatibility condition.
pub const SOLVABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Sup-norm tolerance on the nonlinear residual.
    pub tol_residual: f64,
    /// Initial step fraction of each Newton update.
    pub damping: f64,
    /// Backtracking gives up once the step fraction falls below this.
    pub min_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol_residual: 1e-10,
            damping: 1.0,
            min_step: 1.0 / 1024.0,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidArgument("tol_residual must be positive".into()));
        }
        if !(self.min_step > 0.0 && self.min_step <= self.damping && self.damping <= 1.0) {
            return Err(Error::InvalidArgument("need 0 < min_step <= damping <= 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} contains non-finite values"
        )))
    }
}

/// `-ΔΦ = source`, `Φ = 0` at the Dirichlet nodes.
pub fn solve_poisson_dirichlet(grid: &Grid, source: &ScalarField) -> Result<ScalarField> {
    grid.check(&source.values)?;
    check_finite("source", &source.values)?;
    let n = grid.len();
    let (lower, diag, upper) = grid.neg_div_stencil(&vec![1.0; n - 1]);
    let mut m = BandedMatrix::tridiagonal(&lower, &diag, &upper);
    let mut rhs = source.values.clone();
    for b in grid.dirichlet_nodes() {
        m.set_identity_row(b);
        rhs[b] = 0.0;
    }
    solve_banded(m, &mut rhs)?;
    Ok(ScalarField::new(rhs, Bc::DirichletZero))
}

/// Arithmetic mean of nodal coefficients onto faces.
pub(crate) fn face_average(a: &[f64]) -> Vec<f64> {
    a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// `-div(a ∇F) = f` with zero flux and mean `β`, using the default
/// compatibility tolerance.
pub fn solve_weighted_neumann(
    grid: &Grid,
    coeff: &ScalarField,
    source: &ScalarField,
    mean: f64,
) -> Result<ScalarField> {
    solve_weighted_neumann_tol(grid, coeff, source, mean, SOLVABILITY_TOL)
}

/// As [`solve_weighted_neumann`] with an explicit compatibility tolerance.
///
/// The constant null space is removed by pinning node 0; the source is first
/// projected onto the compatible subspace (its integral is at most `tol`), and
/// the requested mean is restored by a shift.
pub fn solve_weighted_neumann_tol(
    grid: &Grid,
    coeff: &ScalarField,
    source: &ScalarField,
    mean: f64,
    tol: f64,
) -> Result<ScalarField> {
    grid.check(&coeff.values)?;
    grid.check(&source.values)?;
    check_finite("source", &source.values)?;
    let min = coeff.min();
    if !(min > 0.0) {
        return Err(Error::CoefficientNotPositive { min });
    }
    let integral = grid.integrate_values(&source.values);
    if integral.abs() > tol {
        return Err(Error::SolvabilityViolation { integral, tol });
    }
    // The admissible defect is removed in proportion to `a`: a uniform shift
    // would swamp the source wherever the coefficient is tiny.
    let shift = integral / grid.integrate_values(&coeff.values);
    let mut rhs: Vec<f64> = source
        .values
        .iter()
        .zip(&coeff.values)
        .map(|(f, a)| f - shift * a)
        .collect();

    let (lower, diag, upper) = grid.neg_div_stencil(&face_average(&coeff.values));
    let mut m = BandedMatrix::tridiagonal(&lower, &diag, &upper);
    m.set_identity_row(0);
    rhs[0] = 0.0;
    solve_banded(m, &mut rhs)?;

    let current = grid.mean(&rhs);
    for v in &mut rhs {
        *v += mean - current;
    }
    Ok(ScalarField::new(rhs, Bc::NeumannZero))
}

/// Nonlinear residual `-(ε²/2)(Δy + |∇y|²/2) + y - g`.
pub fn exponential_residual(grid: &Grid, y: &[f64], g: &[f64], eps: f64) -> Vec<f64> {
    let n = grid.len();
    let neg_lap = grid.neg_div_flux(&vec![1.0; n - 1], y);
    let field = ScalarField::new(y.to_vec(), Bc::NeumannZero);
    let grad = gradient(grid, &field).expect("length checked by caller");
    let half_eps2 = 0.5 * eps * eps;
    (0..n)
        .map(|i| half_eps2 * (neg_lap[i] - 0.5 * grad[i] * grad[i]) + y[i] - g[i])
        .collect()
}

/// Tridiagonal Jacobian of [`exponential_residual`] at `y`.
fn exponential_jacobian(grid: &Grid, y: &[f64], eps: f64) -> Result<BandedMatrix> {
    let n = grid.len();
    let h = grid.h();
    let half_eps2 = 0.5 * eps * eps;
    let (mut lower, mut diag, mut upper) = grid.neg_div_stencil(&vec![1.0; n - 1]);
    let grad = gradient(grid, &ScalarField::new(y.to_vec(), Bc::NeumannZero))?;
    for i in 0..n {
        diag[i] = half_eps2 * diag[i] + 1.0;
        lower[i] *= half_eps2;
        upper[i] *= half_eps2;
        // the centred |∇y|² term only lives at interior nodes
        if i > 0 && i + 1 < n {
            let c = half_eps2 * grad[i] / (2.0 * h);
            lower[i] += c;
            upper[i] -= c;
        }
    }
    Ok(BandedMatrix::tridiagonal(&lower, &diag, &upper))
}

/// The full Newton correction `-J(y)⁻¹ r(y)` for the exponential equation,
/// an estimate of `y* - y` that is accurate to second order.
pub fn exponential_newton_correction(
    grid: &Grid,
    y: &[f64],
    rhs: &ScalarField,
    eps: f64,
) -> Result<Vec<f64>> {
    grid.check(y)?;
    grid.check(&rhs.values)?;
    let mut delta: Vec<f64> = exponential_residual(grid, y, &rhs.values, eps)
        .into_iter()
        .map(|r| -r)
        .collect();
    solve_banded(exponential_jacobian(grid, y, eps)?, &mut delta)?;
    Ok(delta)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `-(ε²/2)(Δy + |∇y|²/2) + y = g` with zero flux, starting from `y₀ = g`.
pub fn solve_exponential_elliptic(
    grid: &Grid,
    rhs: &ScalarField,
    eps: f64,
    cfg: &NewtonConfig,
) -> Result<(ScalarField, SolveReport)> {
    solve_exponential_elliptic_from(grid, rhs, eps, cfg, &rhs.values)
}

/// As [`solve_exponential_elliptic`] with an explicit initial guess.
pub fn solve_exponential_elliptic_from(
    grid: &Grid,
    rhs: &ScalarField,
    eps: f64,
    cfg: &NewtonConfig,
    initial: &[f64],
) -> Result<(ScalarField, SolveReport)> {
    grid.check(&rhs.values)?;
    grid.check(initial)?;
    check_finite("rhs", &rhs.values)?;
    cfg.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let g = &rhs.values;
    let mut y = initial.to_vec();
    let mut res = exponential_residual(grid, &y, g, eps);
    let mut norm = sup_norm(&res);
    for iter in 1..=cfg.max_iter {
        if !norm.is_finite() {
            break;
        }
        if norm <= cfg.tol_residual {
            return Ok((
                ScalarField::new(y, Bc::NeumannZero),
                SolveReport {
                    iterations: iter,
                    final_residual: norm,
                    converged: true,
                },
            ));
        }
        let mut delta: Vec<f64> = res.iter().map(|r| -r).collect();
        solve_banded(exponential_jacobian(grid, &y, eps)?, &mut delta)?;

        let mut step = cfg.damping;
        loop {
            let trial: Vec<f64> = y.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            let trial_res = exponential_residual(grid, &trial, g, eps);
            let trial_norm = sup_norm(&trial_res);
            if trial_norm.is_finite() && trial_norm < (1.0 - 1e-4 * step) * norm {
                y = trial;
                res = trial_res;
                norm = trial_norm;
                break;
            }
            step *= 0.5;
            if step < cfg.min_step {
                // no descent left: either converged to round-off or stuck
                if norm <= cfg.tol_residual {
                    break;
                }
                return Err(Error::NewtonDiverged {
                    iterations: iter,
                    residual: norm,
                });
            }
        }
    }
    if norm <= cfg.tol_residual {
        return Ok((
            ScalarField::new(y, Bc::NeumannZero),
            SolveReport {
                iterations: cfg.max_iter,
                final_residual: norm,
                converged: true,
            },
        ));
    }
    Err(Error::NewtonDiverged {
        iterations: cfg.max_iter,
        residual: norm,
    })
}
