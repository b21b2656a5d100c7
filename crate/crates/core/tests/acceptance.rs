//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;

use rayon::prelude::*;

use qdd::classical::{evolve_classical, ClassicalConfig};
use qdd::config::RunConfig;
use qdd::diagnostics::{fitted_order, gronwall_envelope, hessian_decomposition};
use qdd::elliptic::{solve_poisson_dirichlet, solve_weighted_neumann};
use qdd::inequality::{
    dummy_report, gamma_adversarial, gamma_for_dimension, gamma_suite, n2_study, sample_with_derivatives,
    SampleSpec, SuiteConfig,
};
use qdd::profiles::{profile, InitialProfile};
use qdd::scheme::{evolve, evolve_partial, ModelParams, StepConfig};
use qdd::sweep::tau_refinement_study;
use qdd::trajectory::Trajectory;
use qdd::{build_grid, Bc, DensityState, Geometry, Grid, ScalarField};

const SEED: u64 = 7;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Outcome = qdd::Result<Verdict>;
type Criterion = (&'static str, fn() -> Outcome);

fn run(grid: &Grid, n0: &DensityState, eps: f64, sigma: f64, horizon: f64) -> qdd::Result<Trajectory> {
    let cfg = StepConfig {
        tau: 1e-4,
        ..StepConfig::default()
    };
    evolve(grid, n0, &ModelParams::new(eps, sigma), &cfg, horizon, 0)
}

fn default_set() -> qdd::Result<Vec<(String, Grid, f64)>> {
    let mut set = Vec::new();
    for (name, grid) in [
        ("slab", build_grid(1, Geometry::Slab, 201, 1.0)?),
        ("disc", build_grid(2, Geometry::Radial, 201, 1.0)?),
    ] {
        for sigma in [0.0, 4.0 * PI, -4.0 * PI] {
            set.push((format!("{name} sigma={:+.0}pi", sigma / PI), grid.clone(), sigma));
        }
    }
    Ok(set)
}

fn mass_conservation() -> Outcome {
    let cosine = profile("cosine")?;
    let worst = default_set()?
        .par_iter()
        .map(|(label, grid, sigma)| {
            let traj = run(grid, &cosine.state(grid)?, 0.1, *sigma, 0.1)?;
            let err = traj
                .reports
                .iter()
                .map(|r| (r.mass - 1.0).abs())
                .fold(0.0, f64::max);
            Ok((err, label.clone(), traj.final_time()))
        })
        .collect::<qdd::Result<Vec<_>>>()?;
    let complete = worst.iter().all(|(_, _, t)| (t - 0.1).abs() < 1e-12);
    let (err, label, _) =
        worst
            .iter()
            .cloned()
            .fold((0.0, String::new(), 0.0), |a, b| if b.0 >= a.0 { b } else { a });
    Ok(Verdict::new(
        complete && err <= 1e-9,
        format!("6 trajectories to T = 0.1, max |mass - 1| = {err:.2e} ({label})"),
    ))
}

fn positivity() -> Outcome {
    let slab = build_grid(1, Geometry::Slab, 201, 1.0)?;
    let disc = build_grid(2, Geometry::Radial, 201, 1.0)?;
    let step = InitialProfile::Step { fraction: 0.5 };
    let cosine = profile("cosine")?;
    let mut cases: Vec<(String, Grid, DensityState, f64)> = default_set()?
        .into_iter()
        .map(|(l, g, s)| {
            let n0 = cosine.state(&g)?;
            Ok((l, g, n0, s))
        })
        .collect::<qdd::Result<_>>()?;
    for (name, g) in [("slab", &slab), ("disc", &disc)] {
        for sigma in [0.0, 4.0 * PI] {
            cases.push((
                format!("{name} step sigma={:.0}pi", sigma / PI),
                g.clone(),
                step.state(g)?,
                sigma,
            ));
        }
    }
    let zeros = cases.iter().filter(|c| c.2.min_density() == 0.0).count();
    let results = cases
        .par_iter()
        .map(|(label, g, n0, sigma)| {
            let horizon = if n0.min_density() == 0.0 { 0.05 } else { 0.1 };
            let traj = run(g, n0, 0.1, *sigma, horizon)?;
            let min = traj
                .reports
                .iter()
                .skip(1)
                .map(|r| r.min_n)
                .fold(f64::INFINITY, f64::min);
            Ok((label.clone(), min))
        })
        .collect::<qdd::Result<Vec<_>>>()?;
    let (label, min) =
        results.iter().cloned().fold(
            (String::new(), f64::INFINITY),
            |a, b| if b.1 < a.1 { b } else { a },
        );
    Ok(Verdict::new(
        min > 0.0 && zeros == 4,
        format!(
            "{} trajectories ({zeros} from data with zeros), min n over steps = {min:.3e} ({label})",
            results.len()
        ),
    ))
}

fn entropy_dissipation() -> Outcome {
    let cfg = RunConfig::preset("dlss")?;
    let cases = [
        (cfg.grid()?, cfg.scheme.horizon),
        (build_grid(2, Geometry::Radial, 201, 1.0)?, 0.1),
    ];
    let rows = cases
        .par_iter()
        .map(|(grid, horizon)| {
            let n0 = cfg.initial_profile()?.state(grid)?;
            let traj = run(grid, &n0, cfg.model.epsilon, 0.0, *horizon)?;
            let gamma = gamma_for_dimension(grid.dim(), 0.05)?;
            let eps2 = cfg.model.epsilon * cfg.model.epsilon;
            let mut rise = f64::NEG_INFINITY;
            let mut bound = f64::NEG_INFINITY;
            for w in traj.reports.windows(2) {
                let (prev, next) = (&w[0], &w[1]);
                rise = rise.max(next.entropy - prev.entropy);
                bound =
                    bound.max(next.entropy + 2.0 * gamma * eps2 * next.tau * next.hessian_l2 - prev.entropy);
            }
            let done = (traj.final_time() - horizon).abs() < 1e-12;
            Ok((grid.dim(), gamma, rise, bound, traj.len() - 1, done))
        })
        .collect::<qdd::Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.5 && r.2 <= 1e-9 && r.3 <= 1e-8);
    let detail = rows
        .iter()
        .map(|(d, g, rise, bound, steps, _)| {
            format!("d={d} gamma={g:.4} steps={steps}: max dE {rise:.2e}, max bound defect {bound:.2e}")
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Verdict::new(pass, detail))
}

fn interaction_boundedness() -> Outcome {
    let cfg = RunConfig::preset("interaction")?;
    let grid = cfg.grid()?;
    let n0 = cfg.initial_profile()?.state(&grid)?;
    let (traj, err) = evolve_partial(
        &grid,
        &n0,
        &cfg.params(&grid),
        &cfg.scheme.step_config(),
        cfg.scheme.horizon,
        0,
    );
    if let Some(e) = err {
        return Ok(Verdict::new(
            false,
            format!("stopped at t = {:.4}: {e}", traj.final_time()),
        ));
    }
    let e = traj.entropies();
    let sup = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let env = gronwall_envelope(&traj.times, &e)?;
    Ok(Verdict::new(
        sup.is_finite() && env.violations == 0,
        format!(
            "sigma = 16pi, T = {}: sup E = {sup:.4}, envelope constant {:.4}, envelope at T {:.4}, violations {}",
            traj.final_time(),
            env.constant,
            env.envelope.last().copied().unwrap_or(f64::NAN),
            env.violations
        ),
    ))
}

fn classical_dichotomy() -> Outcome {
    let cfg = RunConfig::preset("concentrated")?;
    let grid = cfg.grid()?;
    let n0 = cfg.initial_profile()?.state(&grid)?;
    let classical = ClassicalConfig {
        tau: cfg.scheme.tau,
        ..cfg.classical.clone()
    };
    let horizon = 0.2;
    let (sub, sub_report) = evolve_classical(&grid, &n0, 4.0 * PI, &classical, horizon, 0)?;
    let (_, sup_report) = evolve_classical(&grid, &n0, 16.0 * PI, &classical, horizon, 0)?;
    let sub_ok = !sub_report.blew_up && (sub.final_time() - horizon).abs() < 1e-12;
    let t_detect = sup_report.t_detect.unwrap_or(f64::NAN);
    let sup_ok = sup_report.blew_up && t_detect < horizon;
    Ok(Verdict::new(
        sub_ok && sup_ok,
        format!(
            "4pi: completed to {:.3} (max n {:.1}); 16pi: {:?} at t = {t_detect:.5} (cap {:.1})",
            sub.final_time(),
            sub.max_density_trace().into_iter().fold(0.0, f64::max),
            sup_report.trigger,
            classical.cap(&grid)
        ),
    ))
}

fn coercivity_suite() -> Outcome {
    let cases: Vec<(usize, f64)> = [2, 3].iter().flat_map(|&d| [(d, 0.01), (d, 0.05)]).collect();
    let rows = cases
        .par_iter()
        .map(|&(d, delta)| {
            let r = gamma_suite(&SuiteConfig::radial(d, 200, SEED), delta)?;
            let a = gamma_adversarial(&SuiteConfig::radial(d, 0, SEED), delta, 50, 10_000)?;
            Ok((d, delta, r.violations, r.worst_margin, a.min_relative_margin))
        })
        .collect::<qdd::Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.2 == 0 && r.4 >= -1e-8);
    let detail = rows
        .iter()
        .map(|(d, delta, v, m, a)| {
            format!("(d={d}, delta={delta}) violations {v}, margin {m:.3}, adversarial {a:.3}")
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Verdict::new(pass, detail))
}

fn dummy_integral() -> Outcome {
    let mut rates = Vec::new();
    let mut pass = true;
    for (g, d) in [(Geometry::Slab, 1), (Geometry::Radial, 2), (Geometry::Radial, 3)] {
        let r = dummy_report(g, d)?;
        pass &= r.passed();
        rates.push(format!("d={d} rate {:.3}", r.extra["rate"]));
    }
    let mut worst = 0.0_f64;
    let mut samples = 0;
    for d in [2, 3] {
        let grid = build_grid(d, Geometry::Radial, 201, 1.0)?;
        for i in 0..200 {
            let spec = SampleSpec::default().with_seed(qdd::inequality::derive_seed(SEED, 11, i));
            let u = sample_with_derivatives(&grid, &spec)?;
            worst = worst.max(hessian_decomposition(&grid, &u.field(), None)?.identity_residual);
            samples += 1;
        }
    }
    pass &= worst <= 1e-10;
    Ok(Verdict::new(
        pass,
        format!(
            "{}; identity residual {worst:.2e} over {samples} radial samples",
            rates.join(", ")
        ),
    ))
}

fn rate(ns: &[usize], errs: &[f64]) -> f64 {
    let h: Vec<f64> = ns.iter().map(|&n| 1.0 / (n - 1) as f64).collect();
    fitted_order(&h, errs)
}

fn solver_orders() -> Outcome {
    let ns = [51, 101, 201];
    let g = build_grid(1, Geometry::Slab, 101, 1.0)?;
    let phi = solve_poisson_dirichlet(&g, &ScalarField::constant(&g, 1.0, Bc::None))?;
    let quad = phi.max_abs_diff(&ScalarField::from_fn(&g, Bc::None, |x| 0.5 * x * (1.0 - x)));
    let mut dir = Vec::new();
    let mut neu = Vec::new();
    for &n in &ns {
        let g = build_grid(1, Geometry::Slab, n, 1.0)?;
        let f = ScalarField::from_fn(&g, Bc::None, |x| PI * PI * (PI * x).sin());
        let u = solve_poisson_dirichlet(&g, &f)?;
        dir.push(u.max_abs_diff(&ScalarField::from_fn(&g, Bc::None, |x| (PI * x).sin())));
        let one = ScalarField::constant(&g, 1.0, Bc::None);
        let src = ScalarField::from_fn(&g, Bc::None, |x| (PI * x).cos());
        let exact = ScalarField::from_fn(&g, Bc::None, |x| (PI * x).cos() / (PI * PI));
        let fsol = solve_weighted_neumann(&g, &one, &src, g.mean(&exact.values))?;
        neu.push(fsol.max_abs_diff(&exact));
    }
    let (rd, rn) = (rate(&ns, &dir), rate(&ns, &neu));
    let in_band = |r: f64| (1.8..=2.2).contains(&r);
    Ok(Verdict::new(
        quad < 1e-12 && in_band(rd) && in_band(rn),
        format!(
            "quadratic error {quad:.1e}; Dirichlet sine rate {rd:.3}; weighted Neumann cosine rate {rn:.3}"
        ),
    ))
}

fn tau_refinement() -> Outcome {
    let cfg = RunConfig::preset("dlss")?;
    let grid = cfg.grid()?;
    let n0 = cfg.initial_profile()?.state(&grid)?;
    let t = tau_refinement_study(
        &grid,
        &n0,
        &ModelParams::new(0.1, 0.0),
        &cfg.scheme.step_config(),
        4e-4,
        4,
        0.05,
    )?;
    let order = t.order.unwrap_or(f64::NAN);
    let dists: Vec<String> = t.distances.iter().map(|d| format!("{d:.3e}")).collect();
    Ok(Verdict::new(
        t.failure.is_none() && t.monotone && order >= 0.8,
        format!("T = 0.05, distances [{}], order {order:.3}", dists.join(", ")),
    ))
}

fn quartic_constant() -> Outcome {
    let (report, s) = n2_study(&SuiteConfig::radial(2, 1000, SEED), 0.05, 0.05)?;
    Ok(Verdict::new(
        s.relative_change < 0.1
            && s.heldout_trials == 500
            && s.heldout_violations == 0
            && report.violations == 0,
        format!(
            "c(1000) = {:.5}, c(2000) = {:.5}, change {:.1e}; held-out {} samples, max {:.5}, violations {}",
            s.constant_half,
            s.constant_full,
            s.relative_change,
            s.heldout_trials,
            s.heldout_max,
            s.heldout_violations
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("mass conservation", mass_conservation),
        ("positivity", positivity),
        ("entropy dissipation, sigma = 0", entropy_dissipation),
        ("bounded entropy with interaction", interaction_boundedness),
        ("classical blowup dichotomy", classical_dichotomy),
        ("coercivity bound suite", coercivity_suite),
        ("dummy integral and Hessian identities", dummy_integral),
        ("elliptic solver orders", solver_orders),
        ("tau refinement", tau_refinement),
        ("quartic interpolation constant", quartic_constant),
    ];
    let results: Vec<(bool, String)> = criteria
        .par_iter()
        .map(|(_, f)| match f() {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        })
        .collect();
    let mut failed = 0;
    for (k, ((name, _), (pass, detail))) in criteria.iter().zip(&results).enumerate() {
        println!(
            "criterion {:2} {}: {name}: {detail}",
            k + 1,
            if *pass { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!pass);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
