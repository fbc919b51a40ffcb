use std::fs;
use std::path::Path;

use dyadic_lab::cli_io::{self, parse_config, parse_grid, run::sha256_hex, RunManifest};

const DEMO: &str = include_str!("../configs/dyadic_burgers.cfg");
const FP: &str = include_str!("../configs/fp_epsilon.cfg");
const LAMBDA: &str = include_str!("../configs/lambda_sweep.cfg");

fn file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn analysis_disabled_writes_trajectory_and_manifest_only() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{DEMO}\nanalysis.enabled = false\n");
    let outcome = cli_io::run_in(&parse_config(&text).unwrap(), dir.path()).unwrap();
    assert!(outcome.report.is_none());
    assert_eq!(file_names(dir.path()), ["manifest.json", "trajectory.csv"]);
}

#[test]
fn demo_run_resolves_cascade_within_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = cli_io::run_in(&parse_config(DEMO).unwrap(), dir.path()).unwrap();
    let report = outcome.report.unwrap();
    let cascade = report.cascade.unwrap();
    assert!(cascade.resolved_depth() >= 10);
    assert!(cascade.all_satisfied());
    assert!(report.certificate.unwrap().iter().all(|c| c.holds));
    let fit = report.blowup_fit.unwrap();
    let bound = report.cascade_time_bound.unwrap();
    assert!(fit.t_star <= cascade.t0 + bound + 1e-6);
    for name in [
        "crossings.csv",
        "diagnostics.csv",
        "manifest.json",
        "plot.py",
        "report.json",
        "trajectory.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let config = parse_config(FP).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cli_io::run_in(&config, a.path()).unwrap();
    cli_io::run_in(&config, b.path()).unwrap();
    for name in [
        "trajectory.csv",
        "diagnostics.csv",
        "crossings.csv",
        "report.json",
    ] {
        let (x, y) = (
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
        );
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn manifest_digests_match_files() {
    let dir = tempfile::tempdir().unwrap();
    cli_io::run_in(&parse_config(FP).unwrap(), dir.path()).unwrap();
    let manifest: RunManifest =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.complete && manifest.error.is_none());
    assert!(!manifest.files.is_empty());
    for f in &manifest.files {
        let bytes = fs::read(dir.path().join(&f.name)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        assert_eq!(sha256_hex(&bytes), f.sha256);
    }
}

#[test]
fn invalid_config_reports_every_error() {
    let err = parse_config(
        "model.kind = kp\nmodel.lambda = 3\nmodel.n_shell = 4\nintegrator.t_end = -1\n",
    )
    .unwrap_err();
    assert_eq!(err.0.len(), 3, "{err}");
    let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
    assert_eq!(lines, [2, 3, 4]);
}

#[test]
fn empty_grid_runs_no_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cells = cli_io::sweep(DEMO, &parse_grid("").unwrap(), dir.path(), 2).unwrap();
    assert!(cells.is_empty());
    let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
}

#[test]
fn fp_epsilon_sweep_flags_validity() {
    let dir = tempfile::tempdir().unwrap();
    let grid = parse_grid("analysis.epsilon=0.1,0.3,0.5,0.65,0.67,0.7").unwrap();
    let cells = cli_io::sweep(FP, &grid, dir.path(), 3).unwrap();
    let valid: Vec<Option<bool>> = cells.iter().map(|c| c.valid()).collect();
    let expected = [true, true, true, true, false, false].map(Some);
    assert_eq!(valid, expected);
    for c in &cells[..4] {
        assert!(c.error.is_none());
        assert!(c.resolved_depth.unwrap() > 0);
    }
}

#[test]
fn lambda_sweep_reports_finite_blowup_times() {
    let dir = tempfile::tempdir().unwrap();
    let grid = parse_grid(&format!("model.lambda=2,{}", 2f64.powf(2.5))).unwrap();
    let cells = cli_io::sweep(LAMBDA, &grid, dir.path(), 2).unwrap();
    assert_eq!(cells.len(), 2);
    for c in &cells {
        let t = c.t_star.unwrap_or(f64::NAN);
        assert!(t.is_finite() && t > 0.0, "cell {}: {:?}", c.index, c);
    }
    // the chain's time scale shrinks as λ grows
    assert!(cells[1].t_star.unwrap() < cells[0].t_star.unwrap());
}

#[test]
fn unknown_grid_key_rejected() {
    assert!(parse_grid("model.lambada=2,3").is_err());
}
