use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ostrovsky");
const TWO_PI: f64 = std::f64::consts::TAU;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn simulate(dir: &TempDir, name: &str, body: &str) -> (Output, String) {
    let cfg = write_config(dir.path(), &format!("{name}.json"), body);
    let out_dir = dir.path().join(name);
    let out = run(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    (out, out_dir.to_str().unwrap().to_owned())
}

fn audit_json(dir: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(Path::new(dir).join("audit.json")).unwrap()).unwrap()
}

fn check<'a>(report: &'a serde_json::Value, id: &str) -> &'a serde_json::Value {
    report["checks"].as_array().unwrap().iter().find(|c| c["id"] == id).unwrap()
}

#[test]
fn missing_config_names_the_path() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("nowhere.json");
    let out = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(text(&out).contains("nowhere.json"), "{}", text(&out));
}

#[test]
fn unknown_field_reports_line_and_column() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &format!("{{\n  \"n\": 32,\n  \"length\": {TWO_PI},\n  \"profile\": \"sine\",\n  \"t_end\": 0.1,\n  \"epsilon\": 0.1\n}}"),
    );
    let out = run(&["simulate", "--config", &cfg]);
    assert_eq!(code(&out), 1);
    let msg = text(&out);
    assert!(msg.contains("epsilon") && msg.contains("line 6"), "{msg}");
}

#[test]
fn zero_profile_succeeds() {
    let dir = TempDir::new().unwrap();
    let (out, traj) = simulate(
        &dir,
        "zero",
        &format!(r#"{{"n": 32, "length": {TWO_PI}, "profile": "zero", "eps": 0.1, "beta": 0.01, "t_end": 0.2}}"#),
    );
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert_eq!(audit_json(&traj)["pass"], true);
    assert_eq!(code(&run(&["audit", &traj])), 0);
}

#[test]
fn sine_simulation_passes_l2_balance() {
    let dir = TempDir::new().unwrap();
    let (out, traj) = simulate(
        &dir,
        "sine",
        &format!(
            r#"{{"n": 64, "length": {TWO_PI}, "profile": "sine", "eps": 0.05, "coupling": {{"c": 1.0, "p": 2}}, "t_end": 0.5}}"#
        ),
    );
    assert_eq!(code(&out), 0, "{}", text(&out));
    let report = audit_json(&traj);
    assert_eq!(check(&report, "lm:l2-u")["pass"], true);
    assert!(check(&report, "lm:l2-u")["value"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn truncated_trajectory_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let (out, traj) = simulate(
        &dir,
        "cut",
        &format!(r#"{{"n": 32, "length": {TWO_PI}, "profile": "sine", "eps": 0.1, "beta": 0.01, "t_end": 0.2}}"#),
    );
    assert_eq!(code(&out), 0);
    let bin = Path::new(&traj).join("fields.bin");
    let bytes = fs::read(&bin).unwrap();
    fs::write(&bin, &bytes[..bytes.len() - 100]).unwrap();
    let out = run(&["audit", &traj]);
    assert_eq!(code(&out), 1);
    assert!(text(&out).contains("fields.bin"), "{}", text(&out));
}

#[test]
fn disabled_dealiasing_fails_l2_balance() {
    let dir = TempDir::new().unwrap();
    let body = |dealias: bool| {
        format!(
            r#"{{"n": 32, "length": {TWO_PI}, "profile": "sine", "eps": 0.01, "beta": 0.0, "t_end": 1.5, "dealias": {dealias}}}"#
        )
    };
    let (out, aliased) = simulate(&dir, "aliased", &body(false));
    assert_eq!(code(&out), 0, "{}", text(&out));
    let out = run(&["audit", &aliased]);
    assert_eq!(code(&out), 2);
    assert!(text(&out).contains("lm:l2-u"), "{}", text(&out));

    let (out, clean) = simulate(&dir, "clean", &body(true));
    assert_eq!(code(&out), 0);
    assert_eq!(check(&audit_json(&clean), "lm:l2-u")["pass"], true);
}

fn sweep_config(p: f64, eps_list: &str) -> String {
    format!(
        r#"{{"eps_list": {eps_list}, "coupling": {{"c": 1.0, "p": {p}}}, "gamma": 1.0, "t_end": 0.3,
            "n": 64, "length": {TWO_PI}, "profile": "sine", "reference": "self"}}"#
    )
}

#[test]
fn single_eps_sweep_succeeds() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", &sweep_config(2.0, "[0.1]"));
    let out_dir = dir.path().join("sweep");
    let out = run(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    for f in ["sweep.csv", "sweep.json", "err_u_l1.dat", "err_P_linf.dat"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn weak_coupling_sweep_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", &sweep_config(1.0, "[0.1, 0.05]"));
    let out_dir = dir.path().join("sweep");
    let out = run(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(matches!(code(&out), 0 | 2), "{}", text(&out));
    let table: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
    assert!(table["acceptance"]["pass"].is_boolean());
}

#[test]
fn compare_identical_runs_is_zero() {
    let dir = TempDir::new().unwrap();
    let body = format!(r#"{{"n": 32, "length": {TWO_PI}, "profile": "sine", "eps": 0.1, "beta": 0.01, "t_end": 0.2}}"#);
    let (_, a) = simulate(&dir, "a", &body);
    let (_, b) = simulate(&dir, "b", &body);
    let out = run(&["compare", &a, &b, "--window", "0.02,0.2"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["errors"]["u_l1"].as_f64().unwrap(), 0.0);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        r#"{{"n": 64, "length": {TWO_PI}, "profile": "sine", "eps": 0.05, "beta": 0.0025, "t_end": 0.3}}"#
    );
    let (_, a) = simulate(&dir, "a", &body);
    let cfg = write_config(dir.path(), "c.json", &body);
    let c = dir.path().join("c");
    let out = run(&["--threads", "1", "simulate", "--config", &cfg, "--out", c.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    for f in ["fields.bin", "trajectory.csv", "meta.json", "audit.json"] {
        assert_eq!(fs::read(Path::new(&a).join(f)).unwrap(), fs::read(c.join(f)).unwrap(), "{f}");
    }
}
