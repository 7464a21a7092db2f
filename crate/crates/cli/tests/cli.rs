use std::path::Path;
use std::process::{Command, Output};

use cda_fem::harness::config::simulation_from_text;
use cda_fem::harness::studies::ConvergenceReport;
use cda_fem::harness::series::SERIES_HEADER;
use cda_fem::harness::ErrorSeries;
use cda_fem::InterpolantKind;

fn cda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cda")).args(args).output().expect("spawn cda")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn dir_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn verify_passes_every_property() {
    let o = cda(&["verify", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 14);
    assert!(!text.contains("FAIL"));
}

#[test]
fn run_writes_series_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir_arg(dir.path());
    let o = cda(&[
        "run", "--n", "6", "--ratio-k", "3", "--t-final", "0.2", "--dt", "0.02", "--beta", "2", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(SERIES_HEADER));
    let series = ErrorSeries::read(dir.path(), "run").unwrap();
    assert_eq!(series.samples.len(), 11);
    assert!((series.samples.last().unwrap().t - 0.2).abs() < 1e-12);
    assert_eq!(series.config.n, 6);
    assert_eq!(series.config.beta, 2.0);
    assert_eq!(series.config.dt, Some(0.02));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.cfg");
    std::fs::write(&cfg, "# small run\nnu = 0.5\nn = 12\nt-final = 0.1\ninterpolant = lagrange\n").unwrap();
    let out = dir_arg(&dir.path().join("out"));
    let o = cda(&["run", "--config", &cfg.display().to_string(), "--n", "6", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = std::fs::read_to_string(dir.path().join("out").join("run.config")).unwrap();
    let config = simulation_from_text(&echo).unwrap();
    assert_eq!(config.n, 6);
    assert_eq!(config.nu, 0.5);
    assert_eq!(config.t_final, 0.1);
    assert_eq!(config.interpolant, InterpolantKind::CoarseLagrangeP1);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir_arg(dir.path());
    let o = cda(&["run", "--n", "6", "--interpolant", "spline", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spline"));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "nu=1\nreynolds=100\n").unwrap();
    let o = cda(&["run", "--config", &cfg.display().to_string(), "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reynolds"));

    let o = cda(&["run", "--n", "7", "--ratio-k", "3", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));

    let o = cda(&["lagrange", "--mode", "fixed", "--coarse-width", "0.25", "--ns", "6,10,12", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn decay_writes_one_series_per_beta_and_gates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir_arg(dir.path());
    let args = ["decay", "--betas", "0,1", "--n", "6", "--t-final", "0.3", "--dt", "0.03", "--out", &out];
    let o = cda(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for beta in ["0", "1"] {
        let s = ErrorSeries::read(dir.path(), &format!("decay_beta_{beta}")).unwrap();
        assert_eq!(s.config.mu, 0.05);
        assert!(s.samples[0].l2_error > 0.1, "zero initial data starts far from the truth");
    }
    // a short horizon cannot reach a plateau below a tenth of the initial error
    let mut gated = args.to_vec();
    gated.push("--gate");
    let o = cda(&gated);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL decay beta=1"));
}

#[test]
fn convergence_writes_slope_footer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir_arg(dir.path());
    let base = [
        "convergence", "--nu", "1", "--ns", "6,9,12", "--t-final", "0.4", "--dt-factor", "0.4", "--out", &out,
    ];
    let o = cda(&base);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("convergence_nu1_mu0.csv")).unwrap();
    let (points, slope) = ConvergenceReport::parse_csv(&text).unwrap();
    assert_eq!(points.iter().map(|p| p.n).collect::<Vec<_>>(), vec![6, 9, 12]);
    assert!(slope > 2.0, "slope {slope}");
    assert!(stdout(&o).contains(&format!("slope={slope:.4}")));

    let mut gated = base.to_vec();
    gated.extend(["--slope-min", "10"]);
    let o = cda(&gated);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL slope"));
}

#[test]
fn lagrange_fixed_width_uses_growing_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir_arg(dir.path());
    let o = cda(&[
        "lagrange", "--mode", "fixed", "--coarse-width", "0.5", "--ns", "4,6,8", "--t-final", "0.2", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("lagrange_width0.5.csv").exists());
}

#[test]
fn gamma_reports_the_active_branch() {
    let o = cda(&["gamma", "--nu", "1e-2", "--n", "24", "--ratio-k", "3", "--beta", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("gamma=5.000000e-3"), "{text}");
    assert!(text.contains("nudging-limited"));
    let o = cda(&["gamma", "--nu", "1e-6", "--n", "24", "--ratio-k", "3", "--beta", "1"]);
    let text = stdout(&o);
    assert!(text.contains("viscous-limited") && text.contains("admissible=false"), "{text}");
}
