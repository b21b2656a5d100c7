//! Uniform vertex-centred grids on a slab `(0, L)` or a radially symmetric
//! disc/ball of radius `L`, with control-volume quadrature and the
//! second-order stencils used throughout the crate.
//!
//! Node `i` sits at `x_i = i h`, `h = L / (N - 1)`. Its control volume is
//! `[x_i - h/2, x_i + h/2] ∩ [0, L]`, measured against `ω_{d-1} r^{d-1} dr` in
//! the radial case. Control-volume weights integrate constants exactly in every
//! dimension and make the flux-form operators telescope, which is what keeps
//! the time stepper mass conservative.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Slab,
    Radial,
}

/// Boundary condition carried by a field. For radial grids the condition
/// applies at `r = L`; `r = 0` is always a symmetry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bc {
    NeumannZero,
    DirichletZero,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    geometry: Geometry,
    length: f64,
    h: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Area of the face between node `i` and `i + 1`.
    faces: Vec<f64>,
}

/// Area of the unit sphere `S^{d-1}`.
pub fn unit_sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {d}"),
    }
}

pub fn build_grid(d: usize, geometry: Geometry, n: usize, length: f64) -> Result<Grid> {
    match (geometry, d) {
        (Geometry::Slab, 1) | (Geometry::Radial, 2) | (Geometry::Radial, 3) => {}
        (Geometry::Slab, _) => {
            return Err(Error::InvalidGrid(format!(
                "slab geometry requires d = 1, got d = {d}"
            )))
        }
        (Geometry::Radial, _) => {
            return Err(Error::InvalidGrid(format!(
                "radial geometry requires d in {{2, 3}}, got d = {d}"
            )))
        }
    }
    if n < 3 {
        return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "domain extent must be positive, got {length}"
        )));
    }
    let h = length / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();

    // face positions: 0, h/2, 3h/2, ..., L - h/2, L
    let face_pos = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else if k == n {
            length
        } else {
            (k as f64 - 0.5) * h
        }
    };
    let (weights, faces) = match geometry {
        Geometry::Slab => {
            let weights = (0..n).map(|i| face_pos(i + 1) - face_pos(i)).collect();
            (weights, vec![1.0; n - 1])
        }
        Geometry::Radial => {
            let omega = unit_sphere_area(d);
            let df = d as f64;
            let weights = (0..n)
                .map(|i| omega / df * (face_pos(i + 1).powi(d as i32) - face_pos(i).powi(d as i32)))
                .collect();
            let faces = (1..n).map(|k| omega * face_pos(k).powi(d as i32 - 1)).collect();
            (weights, faces)
        }
    };
    Ok(Grid {
        dim: d,
        geometry,
        length,
        h,
        nodes,
        weights,
        faces,
    })
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// |Ω|.
    pub fn volume(&self) -> f64 {
        match self.geometry {
            Geometry::Slab => self.length,
            Geometry::Radial => {
                unit_sphere_area(self.dim) * self.length.powi(self.dim as i32) / self.dim as f64
            }
        }
    }

    pub fn is_radial(&self) -> bool {
        self.geometry == Geometry::Radial
    }

    /// Name of the coordinate column in CSV output.
    pub fn coordinate_name(&self) -> &'static str {
        match self.geometry {
            Geometry::Slab => "x",
            Geometry::Radial => "r",
        }
    }

    /// Indices of nodes where a Dirichlet condition is imposed.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        match self.geometry {
            Geometry::Slab => vec![0, self.len() - 1],
            Geometry::Radial => vec![self.len() - 1],
        }
    }

    pub fn is_dirichlet_node(&self, i: usize) -> bool {
        i == self.len() - 1 || (i == 0 && self.geometry == Geometry::Slab)
    }

    pub fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// `∫ u v dx`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    pub fn mean(&self, u: &[f64]) -> f64 {
        self.integrate_values(u) / self.volume()
    }

    /// Flux-form operator `-(1/V_i) Σ_faces A a_f (u_j - u_i)/h`, i.e. the
    /// discrete `-div(a ∇u)` with zero flux through the outer boundary.
    /// `face_coeff[k]` is the coefficient on the face between `k` and `k+1`.
    pub(crate) fn neg_div_flux(&self, face_coeff: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for k in 0..n - 1 {
            let flux = self.faces[k] * face_coeff[k] * (u[k + 1] - u[k]) / self.h;
            out[k] -= flux;
            out[k + 1] += flux;
        }
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
        out
    }

    /// Off-diagonal couplings of `-div(a ∇·)` as (lower, diag, upper) rows.
    pub(crate) fn neg_div_stencil(&self, face_coeff: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for k in 0..n - 1 {
            let t = self.faces[k] * face_coeff[k] / self.h;
            diag[k] += t / self.weights[k];
            upper[k] -= t / self.weights[k];
            diag[k + 1] += t / self.weights[k + 1];
            lower[k + 1] -= t / self.weights[k + 1];
        }
        (lower, diag, upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub bc: Bc,
}

impl ScalarField {
    pub fn new(values: Vec<f64>, bc: Bc) -> Self {
        Self { values, bc }
    }

    pub fn constant(grid: &Grid, c: f64, bc: Bc) -> Self {
        Self::new(vec![c; grid.len()], bc)
    }

    pub fn from_fn(grid: &Grid, bc: Bc, f: impl Fn(f64) -> f64) -> Self {
        Self::new(grid.nodes().iter().map(|&x| f(x)).collect(), bc)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::new(self.values.iter().map(|&v| f(v)).collect(), self.bc)
    }
}

pub fn integrate(grid: &Grid, field: &ScalarField) -> Result<f64> {
    grid.check(&field.values)?;
    Ok(grid.integrate_values(&field.values))
}

/// Second-order Laplacian in flux form.
///
/// Neumann fields get zero flux through the outer boundary (ghost reflection
/// on the slab). Dirichlet fields use their stored boundary values as stencil
/// neighbours; the returned value at a Dirichlet node is linearly extrapolated
/// from the two adjacent interior nodes.
pub fn laplacian(grid: &Grid, field: &ScalarField) -> Result<ScalarField> {
    grid.check(&field.values)?;
    let n = grid.len();
    let values = match field.bc {
        Bc::None => return Err(Error::MissingBoundaryCondition),
        Bc::NeumannZero => {
            let ones = vec![1.0; n - 1];
            grid.neg_div_flux(&ones, &field.values)
                .into_iter()
                .map(|v| -v)
                .collect()
        }
        Bc::DirichletZero => {
            let ones = vec![1.0; n - 1];
            let mut out: Vec<f64> = grid
                .neg_div_flux(&ones, &field.values)
                .into_iter()
                .map(|v| -v)
                .collect();
            // rows at Dirichlet nodes are half-cell balances, meaningless here
            for &b in &grid.dirichlet_nodes() {
                out[b] = if b == 0 {
                    2.0 * out[1] - out[2]
                } else {
                    2.0 * out[b - 1] - out[b - 2]
                };
            }
            out
        }
    };
    Ok(ScalarField::new(values, field.bc))
}

/// Signed first derivative at the nodes (radial: `∂_r u`).
pub fn gradient(grid: &Grid, field: &ScalarField) -> Result<Vec<f64>> {
    grid.check(&field.values)?;
    let u = &field.values;
    let n = grid.len();
    let h = grid.h();
    let mut g = vec![0.0; n];
    for i in 1..n - 1 {
        g[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    let one_sided_left = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    let one_sided_right = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
    let neumann = field.bc == Bc::NeumannZero;
    g[0] = if grid.is_radial() || neumann {
        0.0
    } else {
        one_sided_left
    };
    g[n - 1] = if neumann { 0.0 } else { one_sided_right };
    Ok(g)
}

/// Pointwise `|∇u|²`.
pub fn gradient_sq(grid: &Grid, field: &ScalarField) -> Result<ScalarField> {
    let g = gradient(grid, field)?;
    Ok(ScalarField::new(g.into_iter().map(|v| v * v).collect(), Bc::None))
}

/// The two principal values of the Hessian of a radially symmetric (or 1-D)
/// field: `u''` and `u'/r`. In d = 1 the second vector is zero.
#[derive(Debug, Clone)]
pub struct HessianPrincipal {
    pub second: Vec<f64>,
    pub first_over_r: Vec<f64>,
}

impl HessianPrincipal {
    /// `|∇²u|² = (u'')² + (d-1)(u'/r)²`.
    pub fn norm_sq(&self, d: usize) -> Vec<f64> {
        let m = (d - 1) as f64;
        self.second
            .iter()
            .zip(&self.first_over_r)
            .map(|(a, b)| a * a + m * b * b)
            .collect()
    }

    /// `Δu = u'' + (d-1) u'/r`.
    pub fn laplacian(&self, d: usize) -> Vec<f64> {
        let m = (d - 1) as f64;
        self.second
            .iter()
            .zip(&self.first_over_r)
            .map(|(a, b)| a + m * b)
            .collect()
    }
}

pub fn hessian_principal(grid: &Grid, field: &ScalarField) -> Result<HessianPrincipal> {
    let first = gradient(grid, field)?;
    let u = &field.values;
    let n = grid.len();
    let h2 = grid.h() * grid.h();
    let mut second = vec![0.0; n];
    for i in 1..n - 1 {
        second[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
    }
    let one_sided = |a: f64, b: f64, c: f64, d: Option<f64>| match d {
        Some(d) => (2.0 * a - 5.0 * b + 4.0 * c - d) / h2,
        None => (a - 2.0 * b + c) / h2,
    };
    let neumann = field.bc == Bc::NeumannZero;
    second[0] = if grid.is_radial() || neumann {
        2.0 * (u[1] - u[0]) / h2
    } else {
        one_sided(u[0], u[1], u[2], u.get(3).copied())
    };
    second[n - 1] = if neumann {
        2.0 * (u[n - 2] - u[n - 1]) / h2
    } else {
        let d = if n >= 4 { Some(u[n - 4]) } else { None };
        one_sided(u[n - 1], u[n - 2], u[n - 3], d)
    };
    let first_over_r = if grid.is_radial() {
        let r = grid.nodes();
        let mut v: Vec<f64> = (0..n)
            .map(|i| if i == 0 { 0.0 } else { first[i] / r[i] })
            .collect();
        v[0] = second[0];
        v
    } else {
        vec![0.0; n]
    };
    Ok(HessianPrincipal { second, first_over_r })
}

/// ρ = √n on the grid, normalized so that `∫ρ² dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    rho: ScalarField,
}

impl DensityState {
    /// Builds the state from density values, normalizing the mass to one.
    pub fn from_density(grid: &Grid, density: &[f64]) -> Result<Self> {
        grid.check(density)?;
        if let Some((node, &value)) = density
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::NegativeDensity { node, value });
        }
        let mass = grid.integrate_values(density);
        if !(mass > 0.0) {
            return Err(Error::InvalidArgument("density has zero total mass".into()));
        }
        let rho = density.iter().map(|v| (v / mass).sqrt()).collect();
        Ok(Self {
            rho: ScalarField::new(rho, Bc::NeumannZero),
        })
    }

    /// Wraps values of ρ that are already normalized.
    pub(crate) fn from_normalized_rho(rho: Vec<f64>) -> Self {
        Self {
            rho: ScalarField::new(rho, Bc::NeumannZero),
        }
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn density(&self) -> Vec<f64> {
        self.rho.values.iter().map(|r| r * r).collect()
    }

    pub fn mass(&self, grid: &Grid) -> f64 {
        grid.inner(&self.rho.values, &self.rho.values)
    }

    pub fn min_density(&self) -> f64 {
        let m = self.rho.min();
        m * m
    }

    pub fn max_density(&self) -> f64 {
        let m = self.rho.max();
        m * m
    }
}

pub(crate) fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a `x,value` (or `r,value`) snapshot with 17 significant digits.
pub fn write_field_csv(path: &Path, grid: &Grid, field: &ScalarField) -> Result<()> {
    grid.check(&field.values)?;
    let mut s = String::new();
    let _ = writeln!(s, "{},value", grid.coordinate_name());
    for (x, v) in grid.nodes().iter().zip(&field.values) {
        let _ = writeln!(s, "{},{}", format_sig17(*x), format_sig17(*v));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a snapshot written by [`write_field_csv`]; returns (coordinates, values).
pub fn read_field_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("x,value") | Some("r,value") => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "unexpected snapshot header {other:?}"
            )))
        }
    }
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("malformed row `{line}`")))?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}")))
        };
        xs.push(parse(a)?);
        vs.push(parse(b)?);
    }
    Ok((xs, vs))
}
