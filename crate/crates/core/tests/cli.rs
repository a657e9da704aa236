use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lpmodel(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpmodel"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn lpmodel")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn analytic_kappa4_columns_agree() {
    let t = tempfile::tempdir().unwrap();
    let o = lpmodel(&["analytic", "--kappa", "4", "--grid", "0.1:3.04:0.1"], t.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(t.path().join("analytic.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 30);
    for r in rows {
        let f: Vec<f64> = r.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((f[1] - f[2]).abs() <= 1e-8, "{r}");
        assert!((f[1] - (1.0 - f[0] / std::f64::consts::PI)).abs() <= 1e-10, "{r}");
    }
}

#[test]
fn analytic_rejects_kappa_out_of_range() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&lpmodel(&["analytic", "--kappa", "9"], t.path())), 2);
    assert!(!t.path().join("analytic.csv").exists());
}

#[test]
fn analytic_kappa_8_3_at_60_degrees() {
    let t = tempfile::tempdir().unwrap();
    let th = std::f64::consts::FRAC_PI_3.to_string();
    let grid = format!("{th}:{th}:1");
    let o = lpmodel(&["analytic", "--kappa", "8/3", "--grid", &grid, "--format", "json"], t.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(t.path().join("analytic.json")).unwrap()).unwrap();
    let s = v[0]["schramm"].as_f64().unwrap();
    assert!((s - 0.75).abs() < 1e-10);
}

#[test]
fn sample_records_variation_and_reaches_end() {
    let t = tempfile::tempdir().unwrap();
    let o = lpmodel(&["sample", "--variation", "v2", "--seed", "5", "--width", "20", "--height", "10"], t.path());
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(t.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["variation"], "v2");
    assert_eq!(m["termination"], "reached_v_end");
    assert!(t.path().join("path.txt").exists());
    assert!(t.path().join("domain.json").exists());
}

#[test]
fn sample_step_cap_exits_one_with_reason() {
    let t = tempfile::tempdir().unwrap();
    let o = lpmodel(&["sample", "--max-steps", "1"], t.path());
    assert_eq!(code(&o), 1);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(t.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["termination"], "max_steps");
    let text = fs::read_to_string(t.path().join("path.txt")).unwrap();
    assert!(text.contains("max_steps"));
}

#[test]
fn field_rejects_point_on_boundary() {
    let t = tempfile::tempdir().unwrap();
    let o = lpmodel(&["field", "--point", "0,0", "--n-paths", "10"], t.path());
    assert_eq!(code(&o), 2);
    assert!(!t.path().join("results.csv").exists());
}

#[test]
fn field_rejects_bad_dimensions() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&lpmodel(&["field", "--width", "7", "--n-paths", "10"], t.path())), 2);
    assert_eq!(code(&lpmodel(&["field", "--n-paths", "0"], t.path())), 2);
    assert_eq!(code(&lpmodel(&["field", "--threads", "0"], t.path())), 2);
}

#[test]
fn sweep_one_kappa_two_sizes() {
    let t = tempfile::tempdir().unwrap();
    let o = lpmodel(
        &["sweep", "--kappa", "4", "--sizes", "10x5,20x10", "--point", "0.25,0.5", "--point", "-0.25,0.5", "--n-paths", "20"],
        t.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(t.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert_eq!(code(&lpmodel(&["sweep", "--sizes", "20x10,10x5", "--n-paths", "5"], t.path())), 2);
}

#[test]
fn out_dir_from_environment() {
    let t = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lpmodel"))
        .args(["analytic", "--kappa", "3"])
        .env("LPMODEL_OUT", t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(t.path().join("analytic.csv").exists());
}

#[test]
fn validate_fast_passes_and_mutation_fails() {
    let t = tempfile::tempdir().unwrap();
    let o = lpmodel(&["validate", "--level", "fast"], &t.path().join("ok"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 11);
    let o = lpmodel(&["validate", "--level", "fast", "--flip-beta-sign"], &t.path().join("bad"));
    assert_eq!(code(&o), 1);
}
