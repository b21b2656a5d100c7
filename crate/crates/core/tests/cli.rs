use std::path::Path;

use qdd::cli::{main_with, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use qdd::config::RunConfig;

fn qdd(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("qdd").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn small_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "[grid]\nnodes = 41\n[scheme]\ntau = 1e-3\nhorizon = 0.01\n[io]\nsnapshot_every = 5\n";

#[test]
fn help_and_version_succeed() {
    let (code, out, _) = qdd(&["--help"]);
    assert_eq!(code, EXIT_OK);
    for flag in ["--config", "--out", "--seed", "--trials", "--quiet"] {
        assert!(out.contains(flag), "{flag} missing from help");
    }
    assert_eq!(qdd(&["--version"]).0, EXIT_OK);
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(qdd(&[]).0, EXIT_USAGE);
    assert_eq!(qdd(&["bogus"]).0, EXIT_USAGE);
    assert_eq!(qdd(&["verify", "nope"]).0, EXIT_USAGE);
    assert_eq!(qdd(&["compare", "nope"]).0, EXIT_USAGE);
    assert_eq!(qdd(&["run", "--seed", "abc"]).0, EXIT_USAGE);
    assert_eq!(qdd(&["verify", "gamma", "--trials", "0"]).0, EXIT_USAGE);
    let (code, _, err) = qdd(&["run", "--config", "no-such-preset"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("no-such-preset"));
}

#[test]
fn config_errors_exit_3_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "[model]\nepsilon = 0.0\n");
    let (code, _, err) = qdd(&["run", "--config", &cfg]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("model.epsilon"), "{err}");

    let cfg = small_config(dir.path(), "[model]\nepsilon = 0.1\ntypo = 3\n");
    assert_eq!(qdd(&["run", "--config", &cfg]).0, EXIT_USAGE);
    let cfg = small_config(dir.path(), "[sweep]\nsigmas = []\n");
    assert_eq!(qdd(&["sweep", "--config", &cfg]).0, EXIT_USAGE);
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let (code, stdout, _) = qdd(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code, EXIT_OK);
    let summary: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(summary["outcome"], "Completed");
    for f in ["timeseries.csv", "summary.json", "config.toml"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(out.join("snapshots").read_dir().unwrap().count() >= 2);
    let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let back = RunConfig::from_toml(&resolved).unwrap();
    assert_eq!(back.grid.nodes, 41);
    assert_eq!(back.io.out_dir, out);
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let (code, _, err) = qdd(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code, EXIT_RUNTIME, "{err}");
}

#[test]
fn print_config_round_trips() {
    let (code, out, _) = qdd(&["print-config"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(RunConfig::from_toml(&out).unwrap(), RunConfig::default());
    let (code, out, _) = qdd(&["print-config", "--config", "interaction"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        RunConfig::from_toml(&out).unwrap(),
        RunConfig::preset("interaction").unwrap()
    );
    let (code, out, _) = qdd(&["print-config", "--config", "dichotomy"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("[sweep]"));
}

#[test]
fn verify_prints_one_report_per_line() {
    let (code, out, _) = qdd(&["verify", "gns", "--trials", "10", "--seed", "3", "--quiet"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    for r in &lines {
        assert_eq!(r["trials"], 10);
        assert_eq!(r["seed"], 3);
        assert_eq!(r["violations"], 0);
    }
    let again = qdd(&["verify", "gns", "--trials", "10", "--seed", "3", "--quiet"]).1;
    assert_eq!(out, again);
}

#[test]
fn regularization_comparison_holds() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = qdd(&[
        "compare",
        "regularization",
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["classical_outcome"], "BlowupDetected");
    assert_eq!(v["quantum_outcome"], "Completed");
    assert!(dir.path().join("comparison.json").is_file());
    assert!(dir.path().join("classical/blowup.json").is_file());
}

#[test]
fn dichotomy_comparison_holds() {
    let (code, out, _) = qdd(&["compare", "dichotomy-8pi", "--quiet"]);
    assert_eq!(code, EXIT_OK, "{out}");
}
