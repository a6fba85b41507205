use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tnl() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tnl"));
    c.env_remove("TNL_CONFIG");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn l2_matrix(dir: &Path, m: [f64; 4]) -> PathBuf {
    let text = format!(
        r#"{{"factors":[{{"dim":2,"norm":"ellp","p":2}},{{"dim":2,"norm":"ellp","p":2}}],"coeffs":[{},{},{},{}]}}"#,
        m[0], m[1], m[2], m[3]
    );
    write(dir, "m.json", &text)
}

/// Singular values of a 2×2 matrix from `σ₁² + σ₂² = ‖M‖_F²` and `σ₁σ₂ = |det M|`.
fn singular_values(m: [f64; 4]) -> (f64, f64) {
    let f2: f64 = m.iter().map(|x| x * x).sum();
    let det = (m[0] * m[3] - m[1] * m[2]).abs();
    let sum = (f2 + 2.0 * det).sqrt();
    let diff = (f2 - 2.0 * det).max(0.0).sqrt();
    ((sum + diff) / 2.0, (sum - diff) / 2.0)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn eps_of_matrix_matches_largest_singular_value() {
    let dir = TempDir::new().unwrap();
    for m in [[1.0, 0.0, 0.0, 1.0], [3.0, -1.0, 0.5, 2.0]] {
        let f = l2_matrix(dir.path(), m);
        let out = tnl().args(["norm", "--kind", "eps", "--in"]).arg(&f).output().unwrap();
        assert_eq!(code(&out), 0);
        let v = json(&out);
        let (s1, _) = singular_values(m);
        assert!((v["lower"].as_f64().unwrap() - s1).abs() < 1e-9 * s1, "{v}");
    }
}

#[test]
fn pi_bracket_contains_nuclear_norm() {
    let dir = TempDir::new().unwrap();
    for m in [[1.0, 0.0, 0.0, 1.0], [3.0, -1.0, 0.5, 2.0]] {
        let f = l2_matrix(dir.path(), m);
        let out = tnl().args(["norm", "--kind", "pi", "--in"]).arg(&f).output().unwrap();
        assert_eq!(code(&out), 0);
        let v = json(&out);
        let (s1, s2) = singular_values(m);
        let nuc = s1 + s2;
        let (lo, up) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
        assert!(lo <= nuc + 1e-9 && nuc <= up + 1e-9 && up - lo <= 1e-3, "{v} vs {nuc}");
    }
}

#[test]
fn csv_output_has_header_and_row() {
    let dir = TempDir::new().unwrap();
    let f = l2_matrix(dir.path(), [1.0, 0.0, 0.0, 1.0]);
    let out = tnl().args(["norm", "--kind", "sup", "--format", "csv", "--in"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("kind,p,lower,upper"));
    assert!(lines[1].starts_with("sup,"));
}

#[test]
fn parse_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.json", "{ \"factors\": [");
    let out = tnl().args(["norm", "--kind", "eps", "--in"]).arg(&bad).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
    let f = l2_matrix(dir.path(), [1.0, 0.0, 0.0, 1.0]);
    let out = tnl().args(["norm", "--kind", "nope", "--in"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = tnl().args(["verify", "no_such_suite"]).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = tnl().args(["verify", "smoothness", "--restarts", "0"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn unsupported_combinations_exit_3() {
    let dir = TempDir::new().unwrap();
    let map = write(dir.path(), "map.json", r#"{"factors":[{"dim":2}],"codomain":{"dim":2},"coeffs":[1,0,0,1]}"#);
    let out = tnl().args(["norm", "--kind", "si_p", "--in"]).arg(&map).output().unwrap();
    assert_eq!(code(&out), 3);
    let out = tnl().args(["norm", "--kind", "pi", "--in"]).arg(&map).output().unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_smoothness_of_pi_passes_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = tnl()
            .args(["verify", "smoothness", "--norm", "pi", "--samples", "8", "--seed", "3", "--out"])
            .arg(path)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let v: Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(v["verdict"], "pass");
    assert!(v["max_deviation"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["config"]["seed"], 3);
}

#[test]
fn verify_property_b_for_sigma_2_passes() {
    let out = tnl()
        .args(["verify", "--suite", "property_b", "--norm", "sigma_p", "--p", "2", "--samples", "4"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["verdict"], "pass");
}

#[test]
fn suite_failure_exits_4_and_still_writes_report() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("beta.csv");
    let out = tnl()
        .args(["verify", "smoothness", "--norm", "beta_p", "--p", "2", "--samples", "4", "--format", "csv", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",fail"), "{text}");
}

#[test]
fn witness_negative_control_and_rerun() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("w1.json");
    let b = dir.path().join("w2.json");
    for path in [&a, &b] {
        let out = tnl().args(["witness", "--norm", "pi", "--dims", "2x3", "--seed", "5", "--out"]).arg(path).output().unwrap();
        assert_eq!(code(&out), 0);
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let v: Value = serde_json::from_slice(&ta).unwrap();
    assert!(v["max_violation"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["seed"], 5);
}

#[test]
fn witness_default_run_records_a_candidate() {
    let out = tnl().args(["witness", "--budget", "4"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!(v["best"].is_object());
    assert_eq!(v["norm"], "beta_2");
}

#[test]
fn config_file_applies_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.conf", "# suite defaults\nseed = 9\nsamples = 3\n");
    let out = tnl().env("TNL_CONFIG", &cfg).args(["verify", "crossnorm", "--norm", "eps"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["config"]["seed"], 9);
    assert_eq!(v["config"]["samples"], 3);
    let out = tnl()
        .args(["--config"])
        .arg(&cfg)
        .args(["verify", "crossnorm", "--norm", "eps", "--seed", "4"])
        .output()
        .unwrap();
    assert_eq!(json(&out)["config"]["seed"], 4);
    let bad = write(dir.path(), "bad.conf", "colour = blue\n");
    let out = tnl().env("TNL_CONFIG", &bad).args(["verify", "crossnorm"]).output().unwrap();
    assert_eq!(code(&out), 2);
}
