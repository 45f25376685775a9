use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use magtorq_cli::commands::{METRICS_HEADER, TRACE_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_magtorq"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

#[test]
fn simulate_reference_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fs::read_to_string(configs().join("reference_state.cfg")).unwrap()
        .replace("integration.duration_orbits = 15", "integration.duration_s = 600");
    let cfg = write_cfg(tmp.path(), "short.cfg", &cfg);
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    let out = run(bin().args(["simulate"]).arg(&cfg).arg("-o").arg(&a));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("settled: "));
    assert!(run(bin().args(["simulate"]).arg(&cfg).arg("-o").arg(&b)).status.success());

    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first.len(), 17);
    assert_eq!(&first[..8], &[0.0, 0.0, 0.0, 0.0, 1.0, 0.02, 0.02, -0.03]);
    assert_eq!(text.lines().count(), 1 + 601);
    // 17 significant digits in scientific notation
    let field = text.lines().nth(2).unwrap().split(',').nth(5).unwrap();
    let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18, "{field}");
}

#[test]
fn config_errors_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("x.csv");
    for text in ["integration.duration_s = 0", "orbit.bogus = 1", "controller.law = pid"] {
        let cfg = write_cfg(tmp.path(), "bad.cfg", text);
        let out = run(bin().arg("simulate").arg(&cfg).arg("-o").arg(&csv));
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(!out.stderr.is_empty());
    }
    let missing = run(bin().arg("analyze").arg(tmp.path().join("nope.cfg")));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn environment_override_is_applied_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.cfg", "integration.duration_s = 100");
    let csv = tmp.path().join("x.csv");
    let out = run(bin()
        .arg("simulate")
        .arg(&cfg)
        .arg("-o")
        .arg(&csv)
        .env("MAGTORQ_INTEGRATION__DURATION_S", "0"));
    assert_eq!(out.status.code(), Some(2));
    let out = run(bin()
        .arg("simulate")
        .arg(&cfg)
        .arg("-o")
        .arg(&csv)
        .env("MAGTORQ_INTEGRATION__DURATION_S", "5"));
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 6);
}

#[test]
fn divergence_exits_with_status_three() {
    let tmp = tempfile::tempdir().unwrap();
    // uncontrolled tumble above the divergence rate limit
    let cfg = write_cfg(
        tmp.path(),
        "d.cfg",
        "controller.law = none\nspacecraft.initial_rate = 11, 0, 0\nintegration.duration_s = 10\nintegration.dt_s = 0.01",
    );
    let out = run(bin().arg("simulate").arg(&cfg).arg("-o").arg(tmp.path().join("d.csv")));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn analyze_reports_stability_for_reference_gains() {
    for name in ["reference_state.cfg", "reference_output.cfg"] {
        let out = run(bin().arg("analyze").arg(configs().join(name)));
        assert!(out.status.success(), "{name}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("Hurwitz: yes; certificate: feasible"), "{text}");
        assert!(text.contains("det(Gamma_av) = "));
        assert!(text.contains("det analytic, coelevation 180 deg = "));
    }
}

#[test]
fn equatorial_aligned_dipole_violates_average_controllability() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "eq.cfg",
        "orbit.inclination_deg = 0\ndipole.coelevation_deg = 180\nanalysis.horizon_orbits = 10",
    );
    let out = run(bin().arg("analyze").arg(&cfg));
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("average controllability: violated"));
}

const SMALL_CAMPAIGN: &str = "integration.duration_s = 3000\ncampaign.n_runs = 5\ncampaign.seed = 42\n";

fn campaign(dir: &Path, cfg: &Path, jobs: &str, traces: bool) -> Output {
    let mut cmd = bin();
    cmd.arg("montecarlo").arg(cfg).arg("-o").arg(dir).args(["--jobs", jobs]);
    if traces {
        cmd.arg("--traces");
    }
    run(&mut cmd)
}

#[test]
fn montecarlo_outputs_are_independent_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "mc.cfg", SMALL_CAMPAIGN);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(campaign(&a, &cfg, "1", false).status.success());
    assert!(campaign(&b, &cfg, "3", true).status.success());
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics, fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert_eq!(metrics.lines().next(), Some(METRICS_HEADER));
    assert_eq!(metrics.lines().count(), 6);
    assert!(fs::read_to_string(a.join("summary.txt")).unwrap().contains("/5"));

    let traces: Vec<_> = fs::read_dir(b.join("traces")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(traces.len(), 6);
    assert!(b.join("traces/nominal.csv").exists());
    assert!(b.join("traces/run_00004.csv").exists());
    assert!(!a.join("traces").exists());
}

#[test]
fn effective_config_reproduces_the_campaign() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "mc.cfg", SMALL_CAMPAIGN);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(campaign(&a, &cfg, "2", false).status.success());
    assert!(campaign(&b, &a.join("config.cfg"), "2", false).status.success());
    assert_eq!(
        fs::read_to_string(a.join("metrics.csv")).unwrap(),
        fs::read_to_string(b.join("metrics.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(a.join("config.cfg")).unwrap(),
        fs::read_to_string(b.join("config.cfg")).unwrap()
    );
}

#[test]
fn single_isotropic_run_matches_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let sim_cfg = write_cfg(
        tmp.path(),
        "sim.cfg",
        "integration.duration_orbits = 6\nspacecraft.principal_moments = 22, 22, 22",
    );
    let mc_cfg = write_cfg(
        tmp.path(),
        "mc.cfg",
        "integration.duration_orbits = 6\ncampaign.n_runs = 1\ncampaign.j_min = 22\ncampaign.j_max = 22\ncampaign.include_nominal = false",
    );
    let out = run(bin().arg("simulate").arg(&sim_cfg).arg("-o").arg(tmp.path().join("s.csv")));
    assert!(out.status.success());
    let summary = String::from_utf8_lossy(&out.stdout).to_string();
    let raw = |name: &str| -> String {
        summary
            .split("; ")
            .find_map(|kv| kv.trim().strip_prefix(&format!("{name}: ")))
            .unwrap()
            .to_string()
    };
    let field = |name: &str| -> f64 { raw(name).parse().unwrap() };

    let dir = tmp.path().join("mc");
    assert!(campaign(&dir, &mc_cfg, "1", false).status.success());
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], raw("settled"));
    match raw("settling_time_s").as_str() {
        "-" => assert_eq!(row[3], ""),
        t => assert_eq!(row[3].parse::<f64>().unwrap(), t.parse::<f64>().unwrap()),
    }
    for (col, name) in [(4, "final_qv_norm"), (5, "final_w_norm"), (6, "peak_mcoils")] {
        assert_eq!(row[col].parse::<f64>().unwrap(), field(name), "{name}");
    }
}

#[test]
fn montecarlo_requires_a_campaign_section() {
    let tmp = tempfile::tempdir().unwrap();
    let out = campaign(&tmp.path().join("o"), &configs().join("reference_state.cfg"), "1", false);
    assert_eq!(out.status.code(), Some(2));
}
