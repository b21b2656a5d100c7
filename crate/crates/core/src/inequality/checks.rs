use serde::{Deserialize, Serialize};

use super::constants::eval_c0_gamma;
use super::sampling::SampledFunction;
use crate::error::{Error, Result};
use crate::grid::{gradient, hessian_principal, Grid, ScalarField};

impl SampledFunction {
    /// Derivatives from the grid's difference stencils, for fields without a
    /// closed form.
    pub fn from_field(grid: &Grid, u: &ScalarField) -> Result<Self> {
        let first = gradient(grid, u)?;
        let hp = hessian_principal(grid, u)?;
        Ok(Self {
            value: u.values.clone(),
            first,
            second: hp.second,
        })
    }

    fn check_len(&self, grid: &Grid) -> Result<()> {
        grid.check(&self.value)?;
        grid.check(&self.first)?;
        grid.check(&self.second)
    }
}

fn require_positive(u: &SampledFunction) -> Result<()> {
    match u.value.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        Some((node, &value)) => Err(Error::NonPositive { node, value }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaCheck {
    pub j: f64,
    /// `∫|∇²u|²`
    pub k: f64,
    pub gamma: f64,
    /// `J - γK`
    pub margin: f64,
}

impl GammaCheck {
    /// `margin / K`, or 0 when `K = 0`.
    pub fn relative_margin(&self) -> f64 {
        if self.k > 0.0 {
            self.margin / self.k
        } else {
            0.0
        }
    }

    pub fn violates(&self, tol: f64) -> bool {
        self.margin < -tol * self.k
    }
}

/// `J(u) = ∫ |∇²u|² + Δu |∇u|²/u - δ |∇u|⁴/u²` against `γ ∫|∇²u|²` for a
/// radial field in d ∈ {2, 3}.
pub fn check_gamma_bound(grid: &Grid, u: &SampledFunction, delta: f64) -> Result<GammaCheck> {
    let d = grid.dim();
    if !grid.is_radial() || !(d == 2 || d == 3) {
        return Err(Error::InvalidArgument(format!(
            "the coercivity check needs a radial grid with d in {{2, 3}}, got d = {d}"
        )));
    }
    u.check_len(grid)?;
    require_positive(u)?;
    let gamma = eval_c0_gamma(d, delta)?.gamma;
    let m = (d - 1) as f64;
    let b = u.first_over_r(grid);
    let mut j_int = Vec::with_capacity(grid.len());
    let mut k_int = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (v, p, a) = (u.value[i], u.first[i], u.second[i]);
        let hess_sq = a * a + m * b[i] * b[i];
        let lap = a + m * b[i];
        let g2 = p * p;
        k_int.push(hess_sq);
        j_int.push(hess_sq + lap * g2 / v - delta * g2 * g2 / (v * v));
    }
    let j = grid.integrate_values(&j_int);
    let k = grid.integrate_values(&k_int);
    Ok(GammaCheck {
        j,
        k,
        gamma,
        margin: j - gamma * k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct N2Check {
    pub quartic: f64,
    /// `∫ u² |∇log u|⁴`
    pub log_gradient: f64,
    pub dirichlet: f64,
    /// `∫u⁴ - δ₁ ∫u²|∇log u|⁴ - δ₂ ∫|∇u|²`
    pub required_c: f64,
}

pub fn check_n2_inequality(grid: &Grid, u: &SampledFunction, delta1: f64, delta2: f64) -> Result<N2Check> {
    u.check_len(grid)?;
    require_positive(u)?;
    if !(delta1 > 0.0 && delta2 > 0.0) {
        return Err(Error::InvalidArgument(
            "delta1 and delta2 must be positive".into(),
        ));
    }
    let quartic: Vec<f64> = u.value.iter().map(|v| v.powi(4)).collect();
    let logg: Vec<f64> = u
        .value
        .iter()
        .zip(&u.first)
        .map(|(v, p)| p.powi(4) / (v * v))
        .collect();
    let dir: Vec<f64> = u.first.iter().map(|p| p * p).collect();
    let quartic = grid.integrate_values(&quartic);
    let log_gradient = grid.integrate_values(&logg);
    let dirichlet = grid.integrate_values(&dir);
    Ok(N2Check {
        quartic,
        log_gradient,
        dirichlet,
        required_c: quartic - delta1 * log_gradient - delta2 * dirichlet,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GnsInstance {
    /// `‖u‖∞ ≤ C ‖u‖_{2,2}^θ ‖u‖₂^{1-θ}` with `θ = d/4`.
    SupNorm,
    /// `‖∇u‖₄ ≤ C ‖u‖_{2,2}^θ ‖u‖₂^{1-θ}` with `θ = (4+d)/8`.
    GradientL4,
}

impl GnsInstance {
    pub fn theta(self, d: usize) -> f64 {
        let d = d as f64;
        match self {
            GnsInstance::SupNorm => d / 4.0,
            GnsInstance::GradientL4 => (4.0 + d) / 8.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GnsInstance::SupNorm => "sup-norm",
            GnsInstance::GradientL4 => "gradient-l4",
        }
    }
}

/// `‖u‖_{2,2} = (‖u‖₂² + ‖∇u‖₂² + ‖∇²u‖₂²)^{1/2}`.
pub fn h2_norm(grid: &Grid, u: &SampledFunction) -> f64 {
    let m = (grid.dim() - 1) as f64;
    let b = u.first_over_r(grid);
    let integrand: Vec<f64> = (0..grid.len())
        .map(|i| u.value[i].powi(2) + u.first[i].powi(2) + u.second[i].powi(2) + m * b[i] * b[i])
        .collect();
    grid.integrate_values(&integrand).sqrt()
}

/// Left side over `‖u‖_{2,2}^θ ‖u‖₂^{1-θ}`.
pub fn check_gagliardo_instance(grid: &Grid, u: &SampledFunction, instance: GnsInstance) -> Result<f64> {
    u.check_len(grid)?;
    let scale = u.value.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let grad = u
        .first
        .iter()
        .chain(&u.second)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if grad <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateRatio);
    }
    let lhs = match instance {
        GnsInstance::SupNorm => scale,
        GnsInstance::GradientL4 => {
            let q: Vec<f64> = u.first.iter().map(|p| p.powi(4)).collect();
            grid.integrate_values(&q).powf(0.25)
        }
    };
    let theta = instance.theta(grid.dim());
    let l2 = grid.l2_norm(&u.value);
    Ok(lhs / (h2_norm(grid, u).powf(theta) * l2.powf(1.0 - theta)))
}

/// `∫ n log n` and `J₂/4 = ∫|∇ρ|²` for `ρ = u/‖u‖₂`, `n = ρ²`.
pub fn log_sobolev_pair(grid: &Grid, u: &SampledFunction) -> Result<(f64, f64)> {
    u.check_len(grid)?;
    require_positive(u)?;
    let rho = u.scaled(1.0 / grid.l2_norm(&u.value));
    let ent: Vec<f64> = rho
        .value
        .iter()
        .map(|r| {
            let n = r * r;
            n * n.ln()
        })
        .collect();
    let dir: Vec<f64> = rho.first.iter().map(|p| p * p).collect();
    Ok((grid.integrate_values(&ent), grid.integrate_values(&dir)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Bc, Geometry};
    use std::f64::consts::PI;

    fn constant(grid: &Grid, c: f64) -> SampledFunction {
        SampledFunction {
            value: vec![c; grid.len()],
            first: vec![0.0; grid.len()],
            second: vec![0.0; grid.len()],
        }
    }

    #[test]
    fn constant_field_has_zero_margin() {
        let g = build_grid(2, Geometry::Radial, 51, 1.0).unwrap();
        let c = check_gamma_bound(&g, &constant(&g, 2.0), 0.05).unwrap();
        assert_eq!((c.j, c.k, c.margin), (0.0, 0.0, 0.0));
        assert!(check_gamma_bound(
            &build_grid(1, Geometry::Slab, 11, 1.0).unwrap(),
            &constant(&g, 1.0),
            0.05
        )
        .is_err());
    }

    #[test]
    fn n2_of_unit_constant() {
        let g = build_grid(1, Geometry::Slab, 41, 1.0).unwrap();
        let c = check_n2_inequality(&g, &constant(&g, 1.0), 0.1, 0.1).unwrap();
        assert!((c.required_c - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gns_ratios_of_a_cosine() {
        // u = 2 + cos(πx): ‖u‖₂² = 9/2, ‖u'‖₂² = π²/2, ‖u''‖₂² = π⁴/2,
        // ‖u'‖₄⁴ = 3π⁴/8, ‖u‖∞ = 3.
        let exact = |inst: GnsInstance| {
            let theta = inst.theta(1);
            let h2 = (4.5 + PI * PI / 2.0 + PI.powi(4) / 2.0).sqrt();
            let lhs = match inst {
                GnsInstance::SupNorm => 3.0,
                GnsInstance::GradientL4 => (3.0 * PI.powi(4) / 8.0).powf(0.25),
            };
            lhs / (h2.powf(theta) * 4.5f64.sqrt().powf(1.0 - theta))
        };
        let err = |n: usize, inst: GnsInstance| {
            let g = build_grid(1, Geometry::Slab, n, 1.0).unwrap();
            let u = ScalarField::from_fn(&g, Bc::NeumannZero, |x| 2.0 + (PI * x).cos());
            let s = SampledFunction::from_field(&g, &u).unwrap();
            (check_gagliardo_instance(&g, &s, inst).unwrap() - exact(inst)).abs()
        };
        for inst in [GnsInstance::SupNorm, GnsInstance::GradientL4] {
            assert!(err(201, inst) < 1e-4, "{inst:?} {}", err(201, inst));
            assert!(err(101, inst) / err(201, inst) > 3.0);
        }
    }

    #[test]
    fn constant_ratio_is_degenerate() {
        let g = build_grid(1, Geometry::Slab, 21, 1.0).unwrap();
        assert!(matches!(
            check_gagliardo_instance(&g, &constant(&g, 0.7), GnsInstance::SupNorm),
            Err(Error::DegenerateRatio)
        ));
    }

    #[test]
    fn doubling_delta2_never_increases_required_c() {
        let g = build_grid(2, Geometry::Radial, 101, 1.0).unwrap();
        for seed in 0..50 {
            let spec = super::super::SampleSpec::default().with_seed(seed);
            let u = super::super::sample_with_derivatives(&g, &spec).unwrap();
            let a = check_n2_inequality(&g, &u, 0.1, 0.2).unwrap().required_c;
            let b = check_n2_inequality(&g, &u, 0.1, 0.4).unwrap().required_c;
            assert!(b <= a);
        }
    }
}
