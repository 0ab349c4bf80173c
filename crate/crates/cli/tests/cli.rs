use std::path::Path;
use std::process::{Command, Output};

fn kfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfm")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn metric_at_disc_centre() {
    let out = kfm(&["metric"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let k = column(&csv, "kernel")[0];
    assert!((k - 1.0 / std::f64::consts::PI).abs() < 1e-12);
    assert!((column(&csv, "g_bergman_11_re")[0] - 2.0).abs() < 1e-10);
    assert!((column(&csv, "g_kf_11_re")[0] - 6.0).abs() < 1e-10);
}

#[test]
fn curvature_and_extremal_on_ball() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema": "kfm-run/1", "domain": {"kind": "ball", "n": 2, "params": {}},
            "points": [[[0.1, 0.0], [0.2, 0.1]], [[0.0, 0.3], [0.0, 0.0]]],
            "vector": [[0.6, 0.0], [0.0, 0.8]]}"#,
    );
    let out = kfm(&["--config", &cfg, "curvature"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    // Ric(u) = -G_B(u, u) for the ball, so the normalized value is -1
    for r in column(&csv, "ricci_u") {
        assert!((r + 1.0).abs() < 1e-6, "{r}");
    }
    let out = kfm(&["--config", &cfg, "extremal"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    for name in ["tau2_kf_residual", "ricci_residual"] {
        assert!(column(&csv, name).iter().all(|r| *r < 1e-8), "{name}");
    }
}

#[test]
fn out_dir_receives_table_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("res");
    let out = kfm(&["--out", out_dir.to_str().unwrap(), "curvature"]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("curvature.csv")).unwrap();
    assert!((column(&csv, "gaussian_kf")[0] + 1.0 / 3.0).abs() < 1e-9);
    let cfg = std::fs::read_to_string(out_dir.join("run_config.json")).unwrap();
    assert!(cfg.contains("kfm-run/1"));
}

#[test]
fn output_is_deterministic() {
    let a = kfm(&["extremal"]).stdout;
    let b = kfm(&["extremal"]).stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        r#"{"schema": "kfm-run/9"}"#,
        r#"{"schema": "kfm-run/1", "extra": 1}"#,
        r#"{"schema": "kfm-run/1", "points": [[[1.5, 0.0]]]}"#,
        r#"{"schema": "kfm-run/1", "points": [[[0.0, 0.0], [0.0, 0.0]]]}"#,
        r#"{"schema": "kfm-run/1", "verify": {"criteria": [12]}}"#,
    ] {
        let cfg = write_config(dir.path(), body);
        let cmd = if body.contains("verify") { "verify" } else { "metric" };
        let out = kfm(&["--config", &cfg, cmd]);
        assert_eq!(out.status.code(), Some(2), "{body}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(kfm(&["--config", "/nonexistent/run.json", "metric"]).status.code(), Some(2));
}

#[test]
fn truncation_layer_is_refused_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema": "kfm-run/1", "points": [[[0.99, 0.0]]]}"#);
    assert_eq!(kfm(&["--config", &cfg, "metric"]).status.code(), Some(2));
    let out = kfm(&["--config", &cfg, "--force-truncation", "metric"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with("true"));
}

#[test]
fn oracle_asymptotics_approach_limits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema": "kfm-run/1", "asymptotics": {"metric": "oracle", "deltas": [0.1, 0.01, 0.001]}}"#,
    );
    let out = kfm(&["--config", &cfg, "asymptotics"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let e = column(&csv, "rel_err_1");
    assert!(e.windows(2).all(|w| w[1] < w[0]));
    assert!(e[2] < 1e-3);
}

#[test]
fn verify_subset_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema": "kfm-run/1", "verify": {"criteria": [1, 2]}}"#);
    let out_dir = dir.path().join("v");
    let out = kfm(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "verify"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS criterion 1") && stdout.contains("PASS criterion 2"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("verify.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);
}

#[test]
fn default_disc_asymptotics_reach_limits() {
    let out = kfm(&["asymptotics"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    for name in ["rel_err_1", "rel_err_3"] {
        assert!(*column(&csv, name).last().unwrap() < 0.05, "{name}");
    }
}

#[test]
fn basis_asymptotics_on_ellipsoid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema": "kfm-run/1",
            "domain": {"kind": "reinhardt_ellipsoid", "n": 2, "params": {"coefficients": [1.0, 1.0], "exponents": [1, 2]}},
            "basis": {"family": "monomial", "degree": 40},
            "asymptotics": {"deltas": [0.5, 0.4]}}"#,
    );
    let out = kfm(&["--config", &cfg, "asymptotics"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(column(&csv, "observable_2").iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn shipped_configs_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["default.json", "ellipsoid.json"] {
        let p = dir.join(name);
        let out = kfm(&["--config", p.to_str().unwrap(), "metric"]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
