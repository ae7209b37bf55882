use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dwstab::report::{parse_analysis, parse_multiplier_set, parse_scan_json, parse_scan_table, to_json};
use dwstab::roots::Classification;
use tempfile::TempDir;

fn dwstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwstab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn out_arg(dir: &TempDir) -> String {
    dir.path().display().to_string()
}

#[test]
fn analyze_exponential_growth_is_unstable() {
    let dir = TempDir::new().unwrap();
    let out = dwstab(&["analyze", "--builtin", "scalar_linear a=1 b=0 tau=0.6931", "--out", &out_arg(&dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = parse_analysis(&read(dir.path(), "analysis.json")).unwrap();
    assert_eq!(report.verdict.classification, Classification::Unstable);
    let expected = 0.6931f64.exp();
    let mu = report.multipliers.roots[0].multiplier;
    assert!((mu.re - expected).abs() < 1e-8 && mu.im.abs() < 1e-12, "{mu}");
}

#[test]
fn analyze_trivial_has_only_unit_multiplier() {
    let dir = TempDir::new().unwrap();
    let out = dwstab(&["analyze", "--builtin", "trivial", "--out", &out_arg(&dir)]);
    assert!(code(&out) == 0 || code(&out) == 2);
    let report = parse_analysis(&read(dir.path(), "analysis.json")).unwrap();
    assert_eq!(report.multipliers.roots.len(), 1);
    assert_eq!(report.multipliers.roots[0].multiplier.re, 1.0);
    assert!(report.verdict.warnings.iter().any(|w| w.contains("no nontrivial")));
}

#[test]
fn analyze_uncontrolled_rotating_wave() {
    let dir = TempDir::new().unwrap();
    let out = dwstab(&["analyze", "--builtin", "stuart_landau lambda0=0.1 omega=1 phi=3.14159", "--out", &out_arg(&dir)]);
    assert_eq!(code(&out), 0);
    let report = parse_analysis(&read(dir.path(), "analysis.json")).unwrap();
    let tau = 3.14159;
    let mut moduli: Vec<f64> = report.multipliers.roots.iter().map(|r| r.multiplier.norm()).collect();
    moduli.sort_by(f64::total_cmp);
    assert_eq!(moduli.len(), 2);
    assert!((moduli[0] - (-0.2f64 * tau).exp()).abs() < 1e-6);
    assert!((moduli[1] - 1.0).abs() < 1e-6);
}

#[test]
fn roots_output_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = dwstab(&["roots", "--builtin", "scalar_linear", "--mu-min", "0.1", "--out", &out_arg(&dir)]);
    assert_eq!(code(&out), 0);
    let text = read(dir.path(), "multipliers.json");
    let set = parse_multiplier_set(&text).unwrap();
    assert_eq!(to_json(&set).unwrap(), text);
}

#[test]
fn roots_without_out_dir_prints_json() {
    let out = dwstab(&["roots", "--builtin", "block_double", "--mu-min", "0.1"]);
    assert_eq!(code(&out), 0);
    let set = parse_multiplier_set(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(set.roots.len(), 1);
    assert_eq!(set.roots[0].multiplicity, 2);
}

#[test]
fn outputs_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        assert_eq!(code(&dwstab(&["analyze", "--builtin", "antiphase_pair", "--mu-min", "0.2", "--out", &out_arg(d)])), 0);
    }
    assert_eq!(read(a.path(), "analysis.json"), read(b.path(), "analysis.json"));
}

#[test]
fn oracle_compare_scalar_and_trivial() {
    let dir = TempDir::new().unwrap();
    let out = dwstab(&["oracle-compare", "--builtin", "scalar_linear a=0 b=-1 tau=1", "--out", &out_arg(&dir)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "comparison.json")).unwrap();
    assert!(v["comparison"]["max_error"].as_f64().unwrap() <= 1e-4);

    let out = dwstab(&["oracle-compare", "--builtin", "trivial", "--out", &out_arg(&dir)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "comparison.json")).unwrap();
    assert_eq!(v["comparison"]["max_error"].as_f64().unwrap(), 0.0);
}

#[test]
fn oracle_compare_ring() {
    let dir = TempDir::new().unwrap();
    let out = dwstab(&["oracle-compare", "--builtin", "zn_ring n=3", "--mesh", "200", "--out", &out_arg(&dir)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "comparison.json")).unwrap();
    assert!(v["comparison"]["max_error"].as_f64().unwrap() <= 1e-3);
}

const SCAN_ONE_POINT: &str = r#"
schema_version = 1

[problem]
builtin = "stuart_landau"

[problem.params]
alpha = 0.4

[scan]
start = 0.0
stop = 0.0
points = 1
"#;

#[test]
fn single_point_scan_matches_analyze() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("scan.toml");
    fs::write(&cfg, SCAN_ONE_POINT).unwrap();
    let scan_dir = dir.path().join("scan");
    let out = dwstab(&["scan-gain", cfg.to_str().unwrap(), "--mu-min", "0.5", "--out", scan_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let scan = parse_scan_json(&read(&scan_dir, "scan.json")).unwrap();
    let rows = parse_scan_table(&read(&scan_dir, "scan.tsv")).unwrap();
    assert_eq!(rows.len(), 1);

    let an_dir = dir.path().join("analyze");
    let out = dwstab(&["analyze", cfg.to_str().unwrap(), "--mu-min", "0.5", "--out", an_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report = parse_analysis(&read(&an_dir, "analysis.json")).unwrap();

    let point = &scan.points[0];
    assert_eq!(point.verdict.as_ref().unwrap(), &report.verdict);
    assert_eq!(point.max_nontrivial_modulus, report.multipliers.max_nontrivial_modulus());
    assert_eq!(rows[0].max_nontrivial_modulus, point.max_nontrivial_modulus);
}

#[test]
fn scan_without_stable_interval_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("scan.toml");
    fs::write(&cfg, SCAN_ONE_POINT.replace("stop = 0.0", "stop = 2.0").replace("start = 0.0", "start = 1.5").replace("points = 1", "points = 3"))
        .unwrap();
    let out = dwstab(&["scan-gain", cfg.to_str().unwrap(), "--out", &out_arg(&dir)]);
    assert_eq!(code(&out), 3);
    let rows = parse_scan_table(&read(dir.path(), "scan.tsv")).unwrap();
    assert!(rows.iter().all(|r| r.verdict == Some(Classification::Unstable)));
}

#[test]
fn noncommuting_gain_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = r#"
schema_version = 1

[problem]
builtin = "stuart_landau"

[problem.params]
phi = 1.5707963267948966

[scan]
gain_structure = [1.0, 0.0, 0.0, 0.0]
points = 3
"#;
    fs::write(&cfg, text).unwrap();
    let out = dwstab(&["scan-gain", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("commute"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "schema_version = 1\nfoo = 2\n[problem]\nbuiltin = \"trivial\"\n").unwrap();
    let out = dwstab(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let out = dwstab(&["analyze", "--builtin", "trivial zeta=1"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn selftest_passes() {
    let out = dwstab(&["selftest"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn selftest_passes_at_reduced_tolerance() {
    let out = dwstab(&["selftest", "--tol", "1e-6"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn selftest_detects_corrupted_symmetry() {
    let dir = TempDir::new().unwrap();
    let out = dwstab(&["selftest", "--corrupt-theta", "--out", &out_arg(&dir)]);
    assert_eq!(code(&out), 1);
    let table = read(dir.path(), "selftest.tsv");
    assert!(table.lines().skip(1).all(|l| l.split('\t').nth(1) == Some("FAIL")));
    assert!(read(dir.path(), "selftest.log").contains("shift_equals_delay"));
}
