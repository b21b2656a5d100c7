//! Entropy, Fisher information and the geometric quantities ξ, η, μ, ϱ used
//! by the coercivity estimate of the Bohm term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, gradient_sq, hessian_principal, DensityState, Grid, ScalarField};

/// `φ(s) = s(log s - 1) + 1`, extended by continuity with `φ(0) = 1`.
pub fn entropy_density(s: f64) -> f64 {
    if s < 1e-300 {
        1.0
    } else {
        s * (s.ln() - 1.0) + 1.0
    }
}

/// `E(n) = ∫ (n(log n - 1) + 1) dx`.
pub fn entropy(grid: &Grid, n: &[f64]) -> Result<f64> {
    grid.check(n)?;
    if let Some((node, &value)) = n.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeDensity { node, value });
    }
    let phi: Vec<f64> = n.iter().map(|&s| entropy_density(s)).collect();
    Ok(grid.integrate_values(&phi))
}

/// `4 ∫ |∇ρ|² dx`, which equals `∫ n |∇ log n|² dx` wherever ρ > 0.
pub fn fisher_information(grid: &Grid, rho: &ScalarField) -> Result<f64> {
    let g = gradient_sq(grid, rho)?;
    Ok(4.0 * grid.integrate_values(&g.values))
}

/// `∫ n |∇ log n|² dx` evaluated directly; needs `n > 0`.
pub fn fisher_information_log_form(grid: &Grid, n: &ScalarField) -> Result<f64> {
    if let Some((node, &value)) = n.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { node, value });
    }
    let log_n = n.map(f64::ln);
    let g = gradient_sq(grid, &log_n)?;
    let integrand: Vec<f64> = n.values.iter().zip(&g.values).map(|(a, b)| a * b).collect();
    Ok(grid.integrate_values(&integrand))
}

/// `‖∇²ρ‖₂²` using the principal-value representation of the Hessian.
pub fn hessian_l2(grid: &Grid, rho: &ScalarField) -> Result<f64> {
    let hp = hessian_principal(grid, rho)?;
    Ok(grid.integrate_values(&hp.norm_sq(grid.dim())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub entropy: f64,
    pub fisher: f64,
    pub mass: f64,
    pub hessian_l2: f64,
    pub min_n: f64,
    pub max_n: f64,
}

pub fn entropy_report(grid: &Grid, state: &DensityState) -> Result<EntropyReport> {
    let n = state.density();
    Ok(EntropyReport {
        entropy: entropy(grid, &n)?,
        fisher: fisher_information(grid, state.rho())?,
        mass: grid.integrate_values(&n),
        hessian_l2: hessian_l2(grid, state.rho())?,
        min_n: state.min_density(),
        max_n: state.max_density(),
    })
}

/// `∫ n log n dx` for a normalized state, the left side of the
/// logarithmic Sobolev inequality.
pub fn log_sobolev_lhs(grid: &Grid, state: &DensityState) -> Result<f64> {
    let n = state.density();
    let integrand: Vec<f64> = n
        .iter()
        .map(|&s| if s < 1e-300 { 0.0 } else { s * s.ln() })
        .collect();
    Ok(grid.integrate_values(&integrand))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianDecomposition {
    /// `ξ = |∇ρ| / ρ`
    pub xi: Vec<f64>,
    /// `η = Δρ / (d ρ)`
    pub eta: Vec<f64>,
    /// `μ`, defined by `(η + μ) ξ² = ∇²ρ : (∇ρ)² / ρ³`
    pub mu: Vec<f64>,
    /// `ϱ² = |∇²ρ/ρ|² - d η² - d/(d-1) μ²`
    pub varrho_sq: Vec<f64>,
    /// Relative sup-norm defect of the decomposition identities.
    pub identity_residual: f64,
}

fn require_positive(rho: &ScalarField) -> Result<()> {
    match rho.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        Some((node, &value)) => Err(Error::NonPositive { node, value }),
        None => Ok(()),
    }
}

/// Pointwise ξ, η, μ, ϱ² for a radially symmetric (or 1-D) positive field.
///
/// For radial fields `∇²ρ : (∇ρ)² = ρ'' (ρ')²`, so `μ = ρ''/ρ - η`; the same
/// formula is used where `ξ ≤ xi_floor`. In d = 1 the decomposition reduces to
/// `|ρ''/ρ|² = η²` with `μ = ϱ = 0`. `xi_floor = None` selects
/// `1e-8 · max|∇ρ| / min ρ`.
pub fn hessian_decomposition(
    grid: &Grid,
    rho: &ScalarField,
    xi_floor: Option<f64>,
) -> Result<HessianDecomposition> {
    grid.check(&rho.values)?;
    require_positive(rho)?;
    let d = grid.dim();
    let df = d as f64;
    let first = gradient(grid, rho)?;
    let hp = hessian_principal(grid, rho)?;
    let n = grid.len();

    let max_grad = first.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    let floor = xi_floor.unwrap_or(1e-8 * max_grad / rho.min());

    let mut xi = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut mu = vec![0.0; n];
    let mut varrho_sq = vec![0.0; n];
    let mut defect = 0.0_f64;
    let mut scale = 0.0_f64;
    for i in 0..n {
        let r = rho.values[i];
        let a = hp.second[i] / r;
        let b = hp.first_over_r[i] / r;
        xi[i] = first[i].abs() / r;
        eta[i] = (a + (df - 1.0) * b) / df;
        let hess_sq = a * a + (df - 1.0) * b * b;
        scale = scale.max(hess_sq);
        if d == 1 {
            defect = defect.max((hess_sq - eta[i] * eta[i]).abs());
            continue;
        }
        mu[i] = a - eta[i];
        varrho_sq[i] = hess_sq - df * eta[i] * eta[i] - df / (df - 1.0) * mu[i] * mu[i];
        let reconstructed = df * eta[i] * eta[i] + df / (df - 1.0) * mu[i] * mu[i] + varrho_sq[i];
        defect = defect.max((hess_sq - reconstructed).abs());
        if xi[i] > floor {
            // (η + μ) ξ² against ρ'' (ρ')² / ρ³
            let lhs = (eta[i] + mu[i]) * xi[i] * xi[i];
            let rhs = hp.second[i] * first[i] * first[i] / (r * r * r);
            defect = defect.max((lhs - rhs).abs() / (1.0 + xi[i] * xi[i]));
        }
    }
    let identity_residual = if scale > 0.0 { defect / scale } else { defect };
    Ok(HessianDecomposition {
        xi,
        eta,
        mu,
        varrho_sq,
        identity_residual,
    })
}

/// `I(ρ) = ∫ ρ² ((d+2) η ξ² + 2 μ ξ² - ξ⁴) dx`, the integral of
/// `div(ρ⁻¹ |∇ρ|² ∇ρ)`. It vanishes for fields with zero normal derivative.
pub fn dummy_integral(grid: &Grid, rho: &ScalarField) -> Result<f64> {
    let dec = hessian_decomposition(grid, rho, None)?;
    let df = grid.dim() as f64;
    let integrand: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r2 = rho.values[i] * rho.values[i];
            let x2 = dec.xi[i] * dec.xi[i];
            r2 * ((df + 2.0) * dec.eta[i] * x2 + 2.0 * dec.mu[i] * x2 - x2 * x2)
        })
        .collect();
    Ok(grid.integrate_values(&integrand))
}

/// Least-squares slope of `log y` against `log x`.
pub fn fitted_order(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Discrete Grönwall bound `E_k ≤ E_{k-1} + τ_k C (1 + E_k)` measured on a
/// trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallEnvelope {
    /// Smallest `C ≥ 0` for which every step satisfies the bound.
    pub constant: f64,
    /// `1 + env_k = (1 + E_0) Π_j (1 - τ_j C)⁻¹`.
    pub envelope: Vec<f64>,
    pub violations: usize,
}

pub fn gronwall_envelope(times: &[f64], entropies: &[f64]) -> Result<GronwallEnvelope> {
    if times.len() != entropies.len() || times.is_empty() {
        return Err(Error::InvalidArgument(
            "need matching, nonempty time and entropy series".into(),
        ));
    }
    if entropies.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidArgument("entropy series is not finite".into()));
    }
    let mut constant = 0.0_f64;
    for k in 1..times.len() {
        let tau = times[k] - times[k - 1];
        let rate = (entropies[k] - entropies[k - 1]) / (tau * (1.0 + entropies[k]));
        constant = constant.max(rate);
    }
    let mut envelope = vec![entropies[0]];
    let mut violations = 0;
    for k in 1..times.len() {
        let shrink = 1.0 - (times[k] - times[k - 1]) * constant;
        let prev = envelope[k - 1];
        let next = if shrink > 0.0 {
            (1.0 + prev) / shrink - 1.0
        } else {
            f64::INFINITY
        };
        if entropies[k] > next + 1e-12 * (1.0 + next.abs()) {
            violations += 1;
        }
        envelope.push(next);
    }
    Ok(GronwallEnvelope {
        constant,
        envelope,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Bc, Geometry};
    use std::f64::consts::{E, PI};

    fn slab(n: usize) -> Grid {
        build_grid(1, Geometry::Slab, n, 1.0).unwrap()
    }

    #[test]
    fn entropy_of_uniform_and_half_support() {
        let g = slab(101);
        assert!(entropy(&g, &vec![1.0; 101]).unwrap().abs() < 1e-14);
        // 100 nodes with h = 1/99: nodes 0..49 carry exactly half the measure
        let g = slab(100);
        let n: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&x| if x < 0.5 { 2.0 } else { 0.0 })
            .collect();
        let e = entropy(&g, &n).unwrap();
        assert!((e - 2f64.ln()).abs() < 1e-12, "{e}");
    }

    #[test]
    fn entropy_of_constants_matches_closed_form() {
        let g = slab(33);
        for c in [0.5, 1.0, 2.0] {
            let e = entropy(&g, &vec![c; 33]).unwrap();
            let expected = c * (f64::ln(c) - 1.0) + 1.0;
            assert!((e - expected).abs() < 1e-12);
        }
        assert!(matches!(
            entropy(&g, &vec![-0.1; 33]),
            Err(Error::NegativeDensity { .. })
        ));
    }

    #[test]
    fn fisher_of_exponential_profile() {
        let err = |n: usize| {
            let g = slab(n);
            let rho = ScalarField::from_fn(&g, Bc::None, |x| (x / 2.0).exp() / (E - 1.0).sqrt());
            (fisher_information(&g, &rho).unwrap() - 1.0).abs()
        };
        assert!(err(201) < 1e-4);
        assert!(err(101) / err(201) > 3.0);
    }

    #[test]
    fn fisher_forms_agree() {
        let g = build_grid(2, Geometry::Radial, 401, 1.0).unwrap();
        let n = ScalarField::from_fn(&g, Bc::NeumannZero, |r| 1.0 + 0.3 * (PI * r * r).cos());
        let rho = n.map(f64::sqrt);
        let a = fisher_information(&g, &rho).unwrap();
        let b = fisher_information_log_form(&g, &n).unwrap();
        assert!((a - b).abs() < 1e-3 * a, "{a} {b}");
    }

    #[test]
    fn fisher_zero_iff_constant() {
        let g = slab(51);
        let c = ScalarField::constant(&g, 0.8, Bc::NeumannZero);
        assert_eq!(fisher_information(&g, &c).unwrap(), 0.0);
        let mut bump = c.clone();
        bump.values[20] += 1e-6;
        assert!(fisher_information(&g, &bump).unwrap() > 0.0);
    }

    #[test]
    fn decomposition_of_constant_is_zero() {
        let g = build_grid(2, Geometry::Radial, 41, 1.0).unwrap();
        let rho = ScalarField::constant(&g, 0.5, Bc::NeumannZero);
        let dec = hessian_decomposition(&g, &rho, None).unwrap();
        for v in [&dec.xi, &dec.eta, &dec.mu, &dec.varrho_sq] {
            assert!(v.iter().all(|x| x.abs() < 1e-12));
        }
        assert!(dummy_integral(&g, &rho).unwrap().abs() < 1e-14);
    }

    #[test]
    fn paraboloid_has_equal_principal_curvatures() {
        let g = build_grid(2, Geometry::Radial, 81, 1.0).unwrap();
        let rho = ScalarField::from_fn(&g, Bc::None, |r| 1.0 + r * r);
        let dec = hessian_decomposition(&g, &rho, None).unwrap();
        assert!(dec.mu.iter().all(|m| m.abs() < 1e-10));
        assert!(dec.varrho_sq.iter().all(|v| v.abs() < 1e-10));
        assert!(dec.identity_residual < 1e-10);
    }

    #[test]
    fn decomposition_rejects_nonpositive() {
        let g = build_grid(3, Geometry::Radial, 11, 1.0).unwrap();
        let mut rho = ScalarField::constant(&g, 1.0, Bc::NeumannZero);
        rho.values[4] = 0.0;
        assert!(matches!(
            hessian_decomposition(&g, &rho, None),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn gronwall_envelope_of_growth() {
        let times: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let e: Vec<f64> = times.iter().map(|t| (1.0 + t * t).ln()).collect();
        let g = gronwall_envelope(&times, &e).unwrap();
        assert!(g.constant > 0.0);
        assert_eq!(g.violations, 0);
        assert!(g.envelope.iter().zip(&e).all(|(a, b)| a + 1e-12 >= *b));
        let flat = gronwall_envelope(&times, &[1.0; 11]).unwrap();
        assert_eq!(flat.constant, 0.0);
        assert!(flat.envelope.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn report_serializes_with_expected_keys() {
        let g = slab(21);
        let s = DensityState::from_density(&g, &[1.0; 21]).unwrap();
        let rep = entropy_report(&g, &s).unwrap();
        let v = serde_json::to_value(rep).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["entropy", "fisher", "hessian_l2", "mass", "max_n", "min_n"]
        );
        assert!((rep.mass - 1.0).abs() < 1e-12);
    }
}
