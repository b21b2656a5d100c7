use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::{
    check_gagliardo_instance, check_gamma_bound, check_n2_inequality, log_sobolev_pair, GnsInstance,
};
use super::sampling::{derive_seed, from_amplitudes, sample_with_derivatives, SampleSpec, SampledFunction};
use crate::diagnostics::{dummy_integral, fitted_order};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Bc, Geometry, Grid, ScalarField};

/// Relative tolerance of the coercivity check, measured against `K(u)`.
pub const GAMMA_TOL: f64 = 1e-8;

/// Suite summary, serialized as one JSON object per suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub inequality: String,
    pub d: usize,
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub violations: usize,
    /// Smallest slack seen; its meaning depends on the suite.
    pub worst_margin: f64,
    /// Sup (or inf, for lower bounds) of the ratio the inequality's constant
    /// has to dominate.
    pub empirical_constant: f64,
    pub seed: u64,
    #[serde(default, flatten)]
    pub extra: BTreeMap<String, f64>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Suite parameters shared by all randomized checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub geometry: Geometry,
    pub d: usize,
    pub nodes: usize,
    pub length: f64,
    pub trials: usize,
    pub seed: u64,
    pub sample: SampleSpec,
}

impl SuiteConfig {
    pub fn radial(d: usize, trials: usize, seed: u64) -> Self {
        Self {
            geometry: Geometry::Radial,
            d,
            nodes: 201,
            length: 1.0,
            trials,
            seed,
            sample: SampleSpec::default(),
        }
    }

    pub fn slab(trials: usize, seed: u64) -> Self {
        Self {
            geometry: Geometry::Slab,
            d: 1,
            ..Self::radial(1, trials, seed)
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.d, self.geometry, self.nodes, self.length)
    }

    /// Sample `index` of the given stream. The overall amplitude is drawn
    /// uniformly from `[0, amplitude]` so nearly flat fields are covered too.
    pub fn sample(&self, grid: &Grid, stream: u64, index: u64) -> Result<SampledFunction> {
        let seed = derive_seed(self.seed, stream, index);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5ca1e, 0));
        let spec = SampleSpec {
            seed,
            amplitude: self.sample.amplitude * rng.gen::<f64>(),
            ..self.sample
        };
        sample_with_derivatives(grid, &spec)
    }

    fn par_map<T: Send>(
        &self,
        grid: &Grid,
        stream: u64,
        count: usize,
        f: impl Fn(&SampledFunction) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| f(&self.sample(grid, stream, i)?))
            .collect()
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `J(u) ≥ γ K(u)` over random samples.
pub fn gamma_suite(cfg: &SuiteConfig, delta: f64) -> Result<InequalityReport> {
    let grid = cfg.grid()?;
    let checks = cfg.par_map(&grid, 0, cfg.trials, |u| check_gamma_bound(&grid, u, delta))?;
    let rel: Vec<f64> = checks.iter().map(|c| c.relative_margin()).collect();
    let ratios: Vec<f64> = checks.iter().filter(|c| c.k > 0.0).map(|c| c.j / c.k).collect();
    let mut extra = BTreeMap::new();
    extra.insert("gamma".into(), checks.first().map_or(f64::NAN, |c| c.gamma));
    Ok(InequalityReport {
        inequality: "gamma".into(),
        d: cfg.d,
        deltas: vec![delta],
        trials: cfg.trials,
        violations: checks.iter().filter(|c| c.violates(GAMMA_TOL)).count(),
        worst_margin: min_of(&rel),
        empirical_constant: min_of(&ratios),
        seed: cfg.seed,
        extra,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub d: usize,
    pub delta: f64,
    pub restarts: usize,
    pub evaluations: usize,
    /// Smallest `(J - γK)/K` found.
    pub min_relative_margin: f64,
    pub worst_amplitudes: Vec<f64>,
}

/// Random-restart coordinate search over the mode amplitudes that tries to
/// drive `(J - γK)/K` down. `budget` caps the evaluations over all restarts.
pub fn gamma_adversarial(
    cfg: &SuiteConfig,
    delta: f64,
    restarts: usize,
    budget: usize,
) -> Result<AdversarialReport> {
    let grid = cfg.grid()?;
    let per = (budget / restarts.max(1)).max(1);
    let objective = |a: &[f64]| -> Result<f64> {
        let u = from_amplitudes(&grid, cfg.sample.k, a);
        let c = check_gamma_bound(&grid, &u, delta)?;
        Ok(if c.k > 0.0 { c.margin / c.k } else { f64::INFINITY })
    };
    let runs: Vec<(f64, Vec<f64>, usize)> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 7, r));
            let mut a: Vec<f64> = (0..cfg.sample.modes)
                .map(|_| cfg.sample.amplitude * rng.gen_range(-1.0..1.0))
                .collect();
            let mut best = objective(&a)?;
            let mut evals = 1;
            let mut step = 0.5 * cfg.sample.amplitude.max(1e-3);
            while evals < per && step > 1e-6 {
                let mut improved = false;
                for i in 0..a.len() {
                    for sign in [1.0, -1.0] {
                        if evals >= per {
                            break;
                        }
                        let mut trial = a.clone();
                        trial[i] += sign * step;
                        let v = objective(&trial)?;
                        evals += 1;
                        if v < best {
                            best = v;
                            a = trial;
                            improved = true;
                            break;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            Ok((best, a, evals))
        })
        .collect::<Result<_>>()?;
    let evaluations = runs.iter().map(|r| r.2).sum();
    let worst = runs
        .into_iter()
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .ok_or_else(|| Error::InvalidArgument("at least one restart is required".into()))?;
    Ok(AdversarialReport {
        d: cfg.d,
        delta,
        restarts,
        evaluations,
        min_relative_margin: worst.0,
        worst_amplitudes: worst.1,
    })
}

/// Required constants `∫u⁴ - δ₁∫u²|∇log u|⁴ - δ₂∫|∇u|²` at `‖u‖₂ = 1`.
pub fn n2_required_constants(
    cfg: &SuiteConfig,
    delta1: f64,
    delta2: f64,
    stream: u64,
    count: usize,
) -> Result<Vec<f64>> {
    let grid = cfg.grid()?;
    cfg.par_map(&grid, stream, count, |u| {
        let u = u.scaled(1.0 / grid.l2_norm(&u.value));
        Ok(check_n2_inequality(&grid, &u, delta1, delta2)?.required_c)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct N2Study {
    pub constant_half: f64,
    pub constant_full: f64,
    /// `(full - half)/|half|`
    pub relative_change: f64,
    pub heldout_trials: usize,
    pub heldout_max: f64,
    pub heldout_violations: usize,
}

impl N2Study {
    pub fn stable(&self) -> bool {
        self.relative_change < 0.1
    }
}

/// Calibrates the constant on `2·trials` samples, compares with the first
/// `trials`, and tests `trials/2` fresh samples against the full constant.
pub fn n2_study(cfg: &SuiteConfig, delta1: f64, delta2: f64) -> Result<(InequalityReport, N2Study)> {
    let cal = n2_required_constants(cfg, delta1, delta2, 1, 2 * cfg.trials)?;
    let held = n2_required_constants(cfg, delta1, delta2, 2, cfg.trials / 2)?;
    let half = max_of(&cal[..cfg.trials]);
    let full = max_of(&cal);
    let heldout_max = max_of(&held);
    let tol = 1e-12 * full.abs().max(1.0);
    let study = N2Study {
        constant_half: half,
        constant_full: full,
        relative_change: (full - half) / half.abs(),
        heldout_trials: held.len(),
        heldout_max,
        heldout_violations: held.iter().filter(|&&c| c > full + tol).count(),
    };
    let mut extra = BTreeMap::new();
    extra.insert("relative_change".into(), study.relative_change);
    extra.insert("heldout_trials".into(), held.len() as f64);
    let unstable = usize::from(!study.stable());
    let report = InequalityReport {
        inequality: "n2".into(),
        d: cfg.d,
        deltas: vec![delta1, delta2],
        trials: cal.len(),
        violations: study.heldout_violations + unstable,
        worst_margin: full - heldout_max,
        empirical_constant: full,
        seed: cfg.seed,
        extra,
    };
    Ok((report, study))
}

/// Sup of the Gagliardo–Nirenberg ratio, with the same samples re-evaluated
/// on a grid of `2·nodes - 1` points to measure discretization drift.
pub fn gns_suite(cfg: &SuiteConfig, instance: GnsInstance) -> Result<InequalityReport> {
    let sup_on = |nodes: usize| -> Result<f64> {
        let c = SuiteConfig { nodes, ..*cfg };
        let grid = c.grid()?;
        let r = c.par_map(&grid, 3, c.trials, |u| {
            match check_gagliardo_instance(&grid, u, instance) {
                Err(Error::DegenerateRatio) => Ok(f64::NEG_INFINITY),
                other => other,
            }
        })?;
        Ok(max_of(&r))
    };
    let coarse = sup_on(cfg.nodes)?;
    let fine = sup_on(2 * cfg.nodes - 1)?;
    let drift = (fine - coarse).abs() / fine.abs();
    let mut extra = BTreeMap::new();
    extra.insert("theta".into(), instance.theta(cfg.d));
    extra.insert("refined_constant".into(), fine);
    extra.insert("refinement_drift".into(), drift);
    Ok(InequalityReport {
        inequality: format!("gns-{}", instance.name()),
        d: cfg.d,
        deltas: vec![],
        trials: cfg.trials,
        violations: usize::from(!(coarse.is_finite() && drift < 0.05)),
        worst_margin: 0.05 - drift,
        empirical_constant: coarse,
        seed: cfg.seed,
        extra,
    })
}

/// Empirical log-Sobolev constant `sup ∫n log n / (J₂/4)` over samples with
/// `ρ = u/‖u‖₂`. The sign of the entropy is not constrained.
pub fn logsob_suite(cfg: &SuiteConfig) -> Result<InequalityReport> {
    let grid = cfg.grid()?;
    let pairs = cfg.par_map(&grid, 4, cfg.trials, |u| log_sobolev_pair(&grid, u))?;
    let ratios: Vec<f64> = pairs.iter().filter(|p| p.1 > 0.0).map(|p| p.0 / p.1).collect();
    let c_l = max_of(&ratios);
    let slack: Vec<f64> = pairs.iter().map(|(e, j)| c_l * j - e).collect();
    let tol = 1e-12;
    Ok(InequalityReport {
        inequality: "logsob".into(),
        d: cfg.d,
        deltas: vec![],
        trials: cfg.trials,
        violations: slack.iter().filter(|s| !(**s >= -tol)).count(),
        worst_margin: min_of(&slack),
        empirical_constant: c_l,
        seed: cfg.seed,
        extra: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    /// Least-squares slope of `log|value|` against `log h`.
    pub rate: f64,
}

/// Dummy integral of `1 + 0.1 cos(π s)` (`s = x` or `r²`) under refinement.
pub fn dummy_refinement(geometry: Geometry, d: usize, nodes: &[usize]) -> Result<RefinementStudy> {
    let mut values = Vec::with_capacity(nodes.len());
    let mut hs = Vec::with_capacity(nodes.len());
    for &n in nodes {
        let grid = build_grid(d, geometry, n, 1.0)?;
        let rho = ScalarField::from_fn(&grid, Bc::NeumannZero, |x| {
            let s = if grid.is_radial() { x * x } else { x };
            1.0 + 0.1 * (std::f64::consts::PI * s).cos()
        });
        let mass = grid.integrate_values(&rho.values.iter().map(|v| v * v).collect::<Vec<_>>());
        let rho = rho.map(|v| v / mass.sqrt());
        values.push(dummy_integral(&grid, &rho)?);
        hs.push(grid.h());
    }
    Ok(RefinementStudy {
        nodes: nodes.to_vec(),
        rate: fitted_order(&hs, &values),
        values,
    })
}

pub fn dummy_report(geometry: Geometry, d: usize) -> Result<InequalityReport> {
    let study = dummy_refinement(geometry, d, &[101, 201, 401])?;
    let mut extra = BTreeMap::new();
    extra.insert("rate".into(), study.rate);
    Ok(InequalityReport {
        inequality: "dummy".into(),
        d,
        deltas: vec![],
        trials: study.nodes.len(),
        violations: usize::from(!(study.rate >= 1.8)),
        worst_margin: study.rate - 1.8,
        empirical_constant: study.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        seed: 0,
        extra,
    })
}

/// Exponents of the constructive bound for the quartic term: powers of
/// `‖u‖₂`, `‖v‖_{1,4}` and `‖u‖_{1,2}`. No numerical constants are implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructiveExponents {
    pub d: usize,
    pub alpha: f64,
    pub u_l2: f64,
    pub v_w14: f64,
    pub u_h1: f64,
}

/// Valid for `α ∈ (0, 1)` in d = 2 and `α ∈ (1/3, 1)` in d = 3.
pub fn constructive_exponents(d: usize, alpha: f64) -> Result<ConstructiveExponents> {
    let lo = match d {
        2 => 0.0,
        3 => 1.0 / 3.0,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "exponents are defined for d in {{2, 3}}, got {d}"
            )))
        }
    };
    if !(alpha > lo && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in ({lo}, 1) for d = {d}, got {alpha}"
        )));
    }
    let df = d as f64;
    Ok(ConstructiveExponents {
        d,
        alpha,
        u_l2: (16.0 - (3.0 - alpha) * df) / 4.0,
        v_w14: (1.0 + alpha) * df / 2.0,
        u_h1: (1.0 - alpha) * df / 2.0,
    })
}
