//! End-to-end CLI behaviour: exit codes, config validation messages, and the
//! shape of emitted artifacts.

use std::path::Path;
use std::process::Command;

fn quasiflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quasiflow"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn straighten_golden2d_exits_zero_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "builtin = \"golden2d\"\n");
    let out = dir.path().join("run");
    let status = quasiflow()
        .args(["straighten", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for name in ["run.json", "steps.csv", "audit.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["status"], "converged");
    assert!(run["beta"]["modes"].is_array());
    assert_eq!(run["beta"]["N"], 2);
    let steps = std::fs::read_to_string(out.join("steps.csv")).unwrap();
    assert!(steps.starts_with("n,k_n,delta_s0,delta_s1,alpha_0,alpha_1,survived"));
}

#[test]
fn straighten_zero_field_converges_at_step_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
builtin = "golden2d"
[problem]
xi = [1.0, 1.618033988749895]
"#,
    );
    let out = dir.path().join("run");
    let status = quasiflow()
        .args(["straighten", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["iterations"], 0);
    assert_eq!(run["alpha_inf"][0], 1.0);
}

#[test]
fn resonant_frequency_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "builtin = \"resonant2d\"\n");
    let out = dir.path().join("run");
    let status = quasiflow()
        .args(["straighten", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["status"], "excluded");
    assert_eq!(run["excluded_step"], 0);
}

#[test]
fn invalid_constants_exit_one_naming_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
builtin = "golden2d"
[scheme]
dim = 2
gamma = 0.01
k0 = 8
mu = 20.0
"#,
    );
    let output = quasiflow()
        .args(["straighten", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("mu > 4·tau + 2·s0 + 4"),
        "stderr must name the violated inequality, got: {stderr}"
    );
}

#[test]
fn missing_config_flag_exits_one() {
    let output = quasiflow().arg("straighten").output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn sweep_small_writes_measure_and_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "builtin = \"goldenbox_small\"\n");
    let out = dir.path().join("run");
    let status = quasiflow()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--threads")
        .arg("2")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let measure = std::fs::read_to_string(out.join("measure.csv")).unwrap();
    assert!(measure
        .starts_with("gamma,samples,excluded,excluded_fraction,excluded_measure,ci_halfwidth"));
    assert_eq!(measure.lines().count(), 3, "two gamma rows expected");
    let points = std::fs::read_to_string(out.join("points.csv")).unwrap();
    assert!(points.starts_with("gamma,xi_0,xi_1,outcome,alpha_0,alpha_1,excluded_step"));
    assert_eq!(points.lines().count(), 1 + 2 * 121);
}

#[test]
fn forced_fixture_reports_small_residual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "builtin = \"forced1d\"\n");
    let out = dir.path().join("run");
    let status = quasiflow()
        .args(["forced", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    let residual = audit["residual"].as_f64().unwrap();
    assert!(residual < 1e-12, "forced residual {residual:e}");
}

#[test]
fn transport_writes_norm_histories() {
    let dir = tempfile::tempdir().unwrap();
    // Shorter horizon than the bundled fixture to keep this test light.
    let cfg = write_config(
        dir.path(),
        r#"
builtin = "transport1d"
[transport]
omega = [1.0]
zeta = [1.618033988749895]
t_max = 10.0
t_steps = 6
s_list = [2.0]
resolution = 32

[[transport.a0_modes]]
k = [1, 1]
cos = [0.001]

[[transport.u0_modes]]
k = [1]
cos = [1.0]
"#,
    );
    let out = dir.path().join("run");
    let status = quasiflow()
        .args(["transport", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let norms = std::fs::read_to_string(out.join("norms.csv")).unwrap();
    assert!(norms.starts_with("t,s,norm"));
    assert_eq!(norms.lines().count(), 1 + 6);
    assert!(out.join("norms_reduced.csv").exists());
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert!(run["m_inf"].is_array());
}

#[test]
fn unknown_builtin_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "builtin = \"nope\"\n");
    let output = quasiflow()
        .args(["straighten", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown builtin"));
}
