//! The `qdd` command line: `run`, `sweep`, `verify`, `compare` and
//! `print-config`.
//!
//! Exit codes: 0 success, 2 runtime failure, 3 usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{RunConfig, SWEEP_PRESETS};
use crate::diagnostics::gronwall_envelope;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::inequality::{
    dummy_report, gamma_adversarial, gamma_suite, gns_suite, logsob_suite, n2_study, GnsInstance,
    InequalityReport, SuiteConfig, GAMMA_TOL,
};
use crate::sweep::{
    records_jsonl, run_experiment, run_sweep, Experiment, ExperimentResult, Outcome, SweepSpec,
};
use crate::Geometry;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "qdd",
    version,
    about = "Quantum drift-diffusion with self-interaction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file, or the id of a shipped preset
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Samples per randomized suite
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Suppress progress output
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve one configuration and write its trajectory
    Run,
    /// Run every (sigma, epsilon) pair of a sweep
    Sweep,
    /// Run a randomized inequality suite
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
    /// Run the paired classical/quantum experiments of a preset
    Compare {
        #[arg(value_enum)]
        preset: ComparePreset,
    },
    /// Print the resolved configuration with every default filled in
    PrintConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Gamma,
    N2,
    Gns,
    Dummy,
    Logsob,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComparePreset {
    #[value(name = "dichotomy-8pi")]
    Dichotomy8pi,
    Regularization,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::UnknownPreset(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    quiet: bool,
}

impl Io<'_> {
    fn info(&mut self, msg: impl AsRef<str>) {
        if !self.quiet {
            let _ = writeln!(self.err, "{}", msg.as_ref());
        }
    }
}

/// Parses `args` (program name first) and executes the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let mut io = Io {
        out,
        err,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Run => cmd_run(&cli, &mut io),
        Command::Sweep => cmd_sweep(&cli, &mut io),
        Command::Verify { suite } => cmd_verify(&cli, *suite, &mut io),
        Command::Compare { preset } => cmd_compare(&cli, *preset, &mut io),
        Command::PrintConfig => cmd_print_config(&cli, &mut io),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn load_run_config(cli: &Cli, default: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref().unwrap_or(default))?;
    if let Some(out) = &cli.out {
        cfg.io.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn experiment(cfg: &RunConfig, epsilon: f64, sigma: f64) -> Experiment {
    Experiment {
        epsilon,
        sigma,
        doping: cfg.model.doping,
        step: cfg.scheme.step_config(),
        classical: crate::classical::ClassicalConfig {
            tau: cfg.scheme.tau,
            ..cfg.classical.clone()
        },
        horizon: cfg.scheme.horizon,
        snapshot_every: cfg.io.snapshot_every,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    outcome: Outcome,
    final_time: f64,
    steps: usize,
    reason: Option<&'a str>,
    max_mass_error: f64,
    min_density: f64,
    entropy_initial: f64,
    entropy_final: f64,
    entropy_max: f64,
    gronwall_constant: Option<f64>,
    gronwall_violations: Option<usize>,
    dissipation_violations: usize,
}

fn summarize(r: &ExperimentResult) -> RunSummary<'_> {
    let t = &r.trajectory;
    let e = t.entropies();
    let g = gronwall_envelope(&t.times, &e).ok();
    RunSummary {
        outcome: r.outcome,
        final_time: t.final_time(),
        steps: t.len().saturating_sub(1),
        reason: r.reason.as_deref(),
        max_mass_error: t
            .reports
            .iter()
            .fold(0.0, |m, x| f64::max(m, (x.mass - 1.0).abs())),
        min_density: t.reports.iter().fold(f64::INFINITY, |m, x| m.min(x.min_n)),
        entropy_initial: e.first().copied().unwrap_or(f64::NAN),
        entropy_final: e.last().copied().unwrap_or(f64::NAN),
        entropy_max: e.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        gronwall_constant: g.as_ref().map(|g| g.constant),
        gronwall_violations: g.as_ref().map(|g| g.violations),
        dissipation_violations: t.reports.iter().filter(|x| !x.dissipation.holds).count(),
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_run(cli: &Cli, io: &mut Io) -> Result<i32> {
    let cfg = load_run_config(cli, "dlss")?;
    let grid = cfg.grid()?;
    let n0 = cfg.initial_profile()?.state(&grid)?;
    prepare_dir(&cfg.io.out_dir)?;
    io.info(format!(
        "run: eps = {}, sigma = {}, T = {}, tau = {}",
        cfg.model.epsilon, cfg.model.sigma, cfg.scheme.horizon, cfg.scheme.tau
    ));
    let r = run_experiment(&grid, &n0, &experiment(&cfg, cfg.model.epsilon, cfg.model.sigma))?;
    write_outputs(&cfg.io.out_dir, &grid, &r)?;
    let p = cfg.io.out_dir.join("config.toml");
    std::fs::write(&p, cfg.to_toml()).map_err(|e| Error::io(&p, e))?;
    let summary = summarize(&r);
    write_json(&cfg.io.out_dir.join("summary.json"), &summary)?;
    let _ = writeln!(io.out, "{}", serde_json::to_string(&summary)?);
    Ok(match r.outcome {
        Outcome::Completed => EXIT_OK,
        _ => {
            let _ = writeln!(
                io.err,
                "error: {}",
                r.reason.as_deref().unwrap_or("run did not complete")
            );
            EXIT_RUNTIME
        }
    })
}

fn write_outputs(dir: &Path, grid: &Grid, r: &ExperimentResult) -> Result<()> {
    prepare_dir(dir)?;
    r.write(dir, grid)
}

fn cmd_sweep(cli: &Cli, io: &mut Io) -> Result<i32> {
    let mut spec = SweepSpec::load(cli.config.as_deref().unwrap_or("dichotomy"))?;
    if let Some(out) = &cli.out {
        spec.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    io.info(format!(
        "sweep: {} runs into {}",
        spec.sigmas.len() * spec.epsilons.len(),
        spec.out_dir.display()
    ));
    let records = run_sweep(&spec)?;
    let _ = write!(io.out, "{}", records_jsonl(&records)?);
    Ok(if records.iter().any(|r| r.outcome == Outcome::StepFailed) {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    })
}

fn adversarial_report(d: usize, delta: f64, seed: u64) -> Result<InequalityReport> {
    let a = gamma_adversarial(&SuiteConfig::radial(d, 0, seed), delta, 50, 10_000)?;
    Ok(InequalityReport {
        inequality: "gamma-adversarial".into(),
        d,
        deltas: vec![delta],
        trials: a.evaluations,
        violations: usize::from(a.min_relative_margin < -GAMMA_TOL),
        worst_margin: a.min_relative_margin,
        empirical_constant: a.min_relative_margin,
        seed,
        extra: Default::default(),
    })
}

/// Runs the named suite with the given master seed.
pub fn verify_suite(suite: Suite, seed: u64, trials: Option<usize>) -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    let geometries = [(Geometry::Slab, 1), (Geometry::Radial, 2), (Geometry::Radial, 3)];
    let cfg_for = |g: Geometry, d: usize, n: usize| match g {
        Geometry::Slab => SuiteConfig::slab(n, seed),
        Geometry::Radial => SuiteConfig::radial(d, n, seed),
    };
    if matches!(suite, Suite::Gamma | Suite::All) {
        for d in [2, 3] {
            for delta in [0.01, 0.05] {
                out.push(gamma_suite(
                    &SuiteConfig::radial(d, trials.unwrap_or(200), seed),
                    delta,
                )?);
                out.push(adversarial_report(d, delta, seed)?);
            }
        }
    }
    if matches!(suite, Suite::N2 | Suite::All) {
        out.push(n2_study(&SuiteConfig::radial(2, trials.unwrap_or(1000), seed), 0.05, 0.05)?.0);
    }
    if matches!(suite, Suite::Gns | Suite::All) {
        for (g, d) in geometries {
            for inst in [GnsInstance::SupNorm, GnsInstance::GradientL4] {
                out.push(gns_suite(&cfg_for(g, d, trials.unwrap_or(200)), inst)?);
            }
        }
    }
    if matches!(suite, Suite::Dummy | Suite::All) {
        for (g, d) in geometries {
            out.push(dummy_report(g, d)?);
        }
    }
    if matches!(suite, Suite::Logsob | Suite::All) {
        for (g, d) in geometries {
            out.push(logsob_suite(&cfg_for(g, d, trials.unwrap_or(200)))?);
        }
    }
    Ok(out)
}

fn cmd_verify(cli: &Cli, suite: Suite, io: &mut Io) -> Result<i32> {
    if cli.trials == Some(0) {
        return Err(Error::config("--trials", "must be at least 1"));
    }
    let seed = cli.seed.unwrap_or(0);
    io.info(format!("verify {suite:?}: seed {seed}"));
    let reports = verify_suite(suite, seed, cli.trials)?;
    for r in &reports {
        let _ = writeln!(io.out, "{}", serde_json::to_string(r)?);
    }
    if let Some(dir) = &cli.out {
        prepare_dir(dir)?;
        write_json(
            &dir.join(format!("verify_{suite:?}.json").to_lowercase()),
            &reports,
        )?;
    }
    Ok(if reports.iter().all(InequalityReport::passed) {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    })
}

#[derive(Debug, Serialize)]
struct CompareRun {
    label: String,
    epsilon: f64,
    sigma: f64,
    outcome: Outcome,
    t_detect: Option<f64>,
    final_time: f64,
    max_density: f64,
}

#[derive(Debug, Serialize)]
struct Comparison {
    preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    classical_outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantum_outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subcritical_outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    supercritical_outcome: Option<Outcome>,
    pattern_holds: bool,
    runs: Vec<CompareRun>,
}

fn cmd_compare(cli: &Cli, preset: ComparePreset, io: &mut Io) -> Result<i32> {
    let cfg = load_run_config(cli, "concentrated")?;
    let grid = cfg.grid()?;
    let n0 = cfg.initial_profile()?.state(&grid)?;
    let pi = std::f64::consts::PI;
    let (name, plan): (&str, Vec<(&str, f64, f64)>) = match preset {
        ComparePreset::Regularization => (
            "regularization",
            vec![
                ("classical", 0.0, cfg.model.sigma),
                ("quantum", cfg.model.epsilon, cfg.model.sigma),
            ],
        ),
        ComparePreset::Dichotomy8pi => (
            "dichotomy-8pi",
            vec![("subcritical", 0.0, 4.0 * pi), ("supercritical", 0.0, 16.0 * pi)],
        ),
    };
    io.info(format!("compare {name}: {} runs", plan.len()));
    let results: Vec<Result<ExperimentResult>> = {
        use rayon::prelude::*;
        plan.par_iter()
            .map(|(_, eps, sigma)| run_experiment(&grid, &n0, &experiment(&cfg, *eps, *sigma)))
            .collect()
    };
    let mut runs = Vec::new();
    for ((label, eps, sigma), r) in plan.iter().zip(results) {
        let r = r?;
        if let Some(dir) = &cli.out {
            write_outputs(&dir.join(label), &grid, &r)?;
        }
        runs.push(CompareRun {
            label: label.to_string(),
            epsilon: *eps,
            sigma: *sigma,
            outcome: r.outcome,
            t_detect: r.t_detect,
            final_time: r.trajectory.final_time(),
            max_density: r.trajectory.max_density_trace().into_iter().fold(0.0, f64::max),
        });
    }
    let first = runs[0].outcome;
    let second = runs[1].outcome;
    let expected = match preset {
        ComparePreset::Regularization => (Outcome::BlowupDetected, Outcome::Completed),
        ComparePreset::Dichotomy8pi => (Outcome::Completed, Outcome::BlowupDetected),
    };
    let regularization = preset == ComparePreset::Regularization;
    let cmp = Comparison {
        preset: name.into(),
        classical_outcome: regularization.then_some(first),
        quantum_outcome: regularization.then_some(second),
        subcritical_outcome: (!regularization).then_some(first),
        supercritical_outcome: (!regularization).then_some(second),
        pattern_holds: (first, second) == expected,
        runs,
    };
    let _ = writeln!(io.out, "{}", serde_json::to_string_pretty(&cmp)?);
    if let Some(dir) = &cli.out {
        write_json(&dir.join("comparison.json"), &cmp)?;
    }
    Ok(if cmp.pattern_holds { EXIT_OK } else { EXIT_RUNTIME })
}

fn cmd_print_config(cli: &Cli, io: &mut Io) -> Result<i32> {
    let text = match cli.config.as_deref() {
        None => RunConfig::default().to_toml(),
        Some(src) if SWEEP_PRESETS.iter().any(|(k, _)| *k == src) => SweepSpec::load(src)?.to_toml(),
        Some(src) => match RunConfig::load(src) {
            Ok(c) => c.to_toml(),
            Err(run_err) => match SweepSpec::load(src) {
                Ok(s) => s.to_toml(),
                Err(_) => return Err(run_err),
            },
        },
    };
    let _ = write!(io.out, "{text}");
    Ok(EXIT_OK)
}
