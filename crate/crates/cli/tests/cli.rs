use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn jacprop(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jacprop"))
        .args(args)
        .env("JACPROP_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("cfg.json");
    let text = format!(
        r#"{{"schema_version": 1, "name": "small", "benchmark": "linear", "linear_state_dim": 3,
            "hidden_width": 6, "ensemble_size": 2, "epochs": 10, "horizon": 30,
            "validation_horizon": 30, "n_runs": 2{extra}}}"#
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_linear_writes_identical_files_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = jacprop(
            &[
                "gen-linear",
                "-n",
                "10",
                "--dt",
                "0.1",
                "--seed",
                "1",
                "-o",
                p.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let stdout = String::from_utf8(out.stdout).unwrap();
        let dev: f64 = stdout.trim().rsplit(' ').next().unwrap().parse().unwrap();
        assert!(dev < 1e-9);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let sys: Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(sys["kind"], "linear");
}

#[test]
fn gen_linear_rejects_zero_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    let out = jacprop(
        &["gen-linear", "-n", "0", "-o", p.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!p.exists());
}

#[test]
fn run_writes_paired_arm_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = jacprop(
        &["run", "-c", &cfg, "--arms", "baseline,tangent", "-j", "2"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut seeds = Vec::new();
    for arm in ["baseline", "tangent"] {
        let arm_dir = dir.path().join("small").join(arm);
        let csv = fs::read_to_string(arm_dir.join("results.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("run_id,seed,arm"));
        seeds.push(
            lines[1..]
                .iter()
                .map(|l| l.split(',').nth(1).unwrap().to_string())
                .collect::<Vec<_>>(),
        );
        let resolved: Value =
            serde_json::from_slice(&fs::read(arm_dir.join("config.resolved.json")).unwrap())
                .unwrap();
        assert_eq!(resolved["tangent_reg"], arm == "tangent");
        assert!(arm_dir.join("summary.json").exists());
    }
    assert_eq!(seeds[0], seeds[1]);
}

#[test]
fn run_flags_override_config_and_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let target = dir.path().join("elsewhere");
    let out = jacprop(
        &[
            "run",
            "-c",
            &cfg,
            "--arms",
            "baseline",
            "--n-runs",
            "1",
            "--set",
            &format!("output_dir=\"{}\"", target.display()),
            "--set",
            "name=renamed",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(target.join("renamed/baseline/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(!dir.path().join("renamed").exists());
}

#[test]
fn unknown_config_field_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), r#", "bogus": 1"#);
    let out = jacprop(&["run", "-c", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn invalid_override_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = jacprop(&["run", "-c", &cfg, "--set", "dropout=1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = jacprop(&["run", "-c", &cfg, "--arms", "nonsense"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn activation_study_writes_all_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = jacprop(&["activation-study", "-c", &cfg, "-j", "2"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("small/activation_study.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("activation,epoch,run,log_error"));
    assert_eq!(lines.count(), 6 * 2 * 3);
}

#[test]
fn simulate_then_fit_ltv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.json");
    let traj = dir.path().join("traj.csv");
    let model = dir.path().join("ltv.json");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    assert_eq!(
        jacprop(
            &[
                "gen-linear",
                "-n",
                "3",
                "-m",
                "1",
                "--seed",
                "4",
                "-o",
                &s(&sys)
            ],
            dir.path()
        )
        .status
        .code(),
        Some(0)
    );
    let out = jacprop(
        &[
            "simulate",
            "-s",
            &s(&sys),
            "--horizon",
            "50",
            "-o",
            &s(&traj),
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(fs::read_to_string(&traj).unwrap().lines().count(), 51);
    let out = jacprop(&["fit-ltv", "-t", &s(&traj), "-o", &s(&model)], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fitted: Value = serde_json::from_slice(&fs::read(&model).unwrap()).unwrap();
    assert!(fitted.is_object());
}

#[test]
fn simulate_defaults_to_robot() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("robot.csv");
    let out = jacprop(
        &["simulate", "--horizon", "20", "-o", traj.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let meta: Value =
        serde_json::from_slice(&fs::read(dir.path().join("robot.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["state_dim"], 4);
    assert_eq!(meta["system"]["kind"], "robot");
}

#[test]
fn spectrum_writes_learned_and_true_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let csv = dir.path().join("spectrum.csv");
    let out = jacprop(
        &[
            "spectrum",
            "-c",
            &cfg,
            "--points",
            "4",
            "-o",
            csv.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(
        rows.iter().filter(|r| r.contains(",learned,")).count(),
        4 * 3
    );
    assert_eq!(rows.iter().filter(|r| r.contains(",true,")).count(), 4 * 3);
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = jacprop(&["run", "-c", "/nonexistent/cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
