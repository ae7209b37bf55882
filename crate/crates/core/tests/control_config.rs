use std::collections::BTreeMap;

use dwstab::catalog::{builtin, default_builtin, rotation};
use dwstab::config::{parse_builtin_spec, parse_config, ConfigError, ProblemConfig};
use dwstab::control::{analyze_gain, build_controlled, scan_gain, ControlError, GainGrid, ScanSettings};
use dwstab::report::{parse_multiplier_set, parse_scan_table, to_json, write_scan_table};
use dwstab::roots::{Classification, MultiplierSet, RootRecord, SearchDiagnostics, SearchRegion};
use dwstab::{CMatrix, C64};
use proptest::prelude::*;

fn alpha(a: f64) -> BTreeMap<String, f64> {
    BTreeMap::from([("alpha".to_string(), a)])
}

#[test]
fn controlled_delay_coefficient() {
    let b = builtin("stuart_landau", &BTreeMap::from([("k".to_string(), 0.7)])).unwrap();
    let c = b.coefficients(1e-8).unwrap();
    let expected = rotation(std::f64::consts::PI).scale(C64::new(0.7, 0.0));
    for t in [0.0, 1.0, 2.5] {
        assert!(c.b(t).max_abs_diff(&expected) < 1e-15);
    }
}

#[test]
fn noncommuting_gain_rejected() {
    let b = builtin("stuart_landau", &BTreeMap::from([("phi".to_string(), std::f64::consts::FRAC_PI_2)])).unwrap();
    let t = b.gain_template.unwrap();
    let k = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(matches!(build_controlled(t.base.clone(), &k, &t.orbit), Err(ControlError::NotCommuting(_))));
    let bad = dwstab::control::GainTemplate { structure: k, ..t };
    let grid = GainGrid { start: 0.0, stop: 1.0, points: 2 };
    assert!(matches!(scan_gain(&bad, &grid, &ScanSettings::default()), Err(ControlError::NotCommuting(_))));
}

#[test]
fn scan_points_consistent_with_modulus() {
    let b = builtin("stuart_landau", &alpha(0.4)).unwrap();
    let t = b.gain_template.unwrap();
    let grid = GainGrid { start: 0.0, stop: 1.0, points: 6 };
    let r = scan_gain(&t, &grid, &ScanSettings::default()).unwrap();
    assert_eq!(r.points.len(), 6);
    for p in &r.points {
        assert!(p.error.is_none());
        assert!(p.trivial_residual.unwrap() <= 1e-6);
        let m = p.max_nontrivial_modulus.unwrap();
        match p.classification().unwrap() {
            Classification::Stable => assert!(m < 1.0),
            Classification::Unstable => assert!(m > 1.0),
            Classification::Inconclusive => assert!((m - 1.0).abs() < 1e-3),
        }
    }
    // k = 0.4 and 0.6 lie inside the analytic interval (0.2, 0.7247).
    assert_eq!(r.stable_intervals, vec![(0.4, 0.6000000000000001)]);
}

#[test]
fn single_point_scan_equals_direct_analysis() {
    let b = builtin("stuart_landau", &alpha(0.4)).unwrap();
    let t = b.gain_template.unwrap();
    let s = ScanSettings::default();
    let grid = GainGrid { start: 0.5, stop: 0.5, points: 1 };
    let r = scan_gain(&t, &grid, &s).unwrap();
    assert_eq!(r.points[0], analyze_gain(&t, 0.5, &s));
}

#[test]
fn zero_gain_reproduces_uncontrolled_multipliers() {
    let b = builtin("stuart_landau", &alpha(0.4)).unwrap();
    let known: Vec<f64> = b.known.iter().map(|k| k.value.re).collect();
    let p = analyze_gain(b.gain_template.as_ref().unwrap(), 0.0, &ScanSettings::default());
    let expected = known.iter().map(|v| v.abs()).filter(|v| (v - 1.0).abs() > 1e-9).fold(0.0, f64::max);
    assert!((p.max_nontrivial_modulus.unwrap() - expected).abs() < 1e-8);
}

const EXPLICIT: &str = r#"
schema_version = 1

[problem.explicit]
dimension = 1
delay = 1.0
period = 1.0
orbit = [{ cos = [0.0] }]
a_modes = [{ cos = [0.0] }]
b_modes = [{ cos = [-1.0] }]

[symmetry]
h = [1.0]
theta = 1.0
"#;

#[test]
fn explicit_config_resolves() {
    let cfg = parse_config(EXPLICIT).unwrap();
    let r = cfg.resolve().unwrap();
    assert!(r.validation.passed());
    assert_eq!(r.coeffs.b(0.3)[(0, 0)], C64::new(-1.0, 0.0));
}

#[test]
fn config_errors() {
    assert!(matches!(parse_config("schema_version = 2\n[problem]\nbuiltin = \"trivial\"\n"), Err(ConfigError::Schema(2))));
    assert!(matches!(parse_config("schema_version = 1\n[problem]\n"), Err(ConfigError::Invalid(_))));
    assert!(matches!(parse_config("schema_version = 1\nextra = 1\n[problem]\nbuiltin = \"trivial\"\n"), Err(ConfigError::Parse(_))));
    let bad_theta = EXPLICIT.replace("theta = 1.0", "theta = 0.5");
    assert!(matches!(parse_config(&bad_theta).unwrap().resolve(), Err(ConfigError::Validation(_))));
    let cfg = ProblemConfig::from_builtin_spec("antiphase_pair c=0.2").unwrap();
    assert!(cfg.resolve().is_ok());
    assert!(matches!(ProblemConfig::from_builtin_spec("nope").unwrap().resolve(), Err(ConfigError::UnknownBuiltin(_))));
}

#[test]
fn builtin_defaults_are_consistent() {
    let b = default_builtin("block_double").unwrap();
    assert_eq!(b.known.len(), 1);
    assert_eq!(b.known[0].multiplicity, 2);
    assert!((b.known[0].value.re - 2.0).abs() < 1e-14);
}

fn record() -> impl Strategy<Value = RootRecord> {
    (-10.0f64..10.0, -10.0f64..10.0, 1usize..4, 0.0f64..1e-6).prop_map(|(re, im, m, res)| {
        let z = C64::new(re, im);
        RootRecord { z, multiplicity: m, multiplier: C64::new(1.0, 0.0) / z, newton_residual: res }
    })
}

proptest! {
    #[test]
    fn multiplier_set_round_trip(roots in prop::collection::vec(record(), 0..6), radius in 1.0f64..100.0) {
        let set = MultiplierSet {
            total_count: roots.iter().map(|r| r.multiplicity).sum(),
            trivial_root: roots.first().cloned(),
            roots,
            region: SearchRegion::Disk { center: C64::new(0.0, 0.0), radius },
            diagnostics: SearchDiagnostics::default(),
        };
        let text = to_json(&set).unwrap();
        prop_assert_eq!(parse_multiplier_set(&text).unwrap(), set);
    }

    #[test]
    fn builtin_spec_round_trip(a in -5.0f64..5.0, tau in 0.1f64..3.0) {
        let spec = format!("scalar_linear a={a} tau={tau}");
        let (name, params) = parse_builtin_spec(&spec).unwrap();
        prop_assert_eq!(name, "scalar_linear");
        prop_assert_eq!(params["a"], a);
        prop_assert_eq!(params["tau"], tau);
    }
}

#[test]
fn scan_table_round_trip() {
    let b = builtin("stuart_landau", &alpha(0.4)).unwrap();
    let grid = GainGrid { start: 0.3, stop: 0.9, points: 2 };
    let r = scan_gain(b.gain_template.as_ref().unwrap(), &grid, &ScanSettings::default()).unwrap();
    let rows = parse_scan_table(&write_scan_table(&r)).unwrap();
    for (row, p) in rows.iter().zip(&r.points) {
        assert_eq!(row.gain, p.gain);
        assert_eq!(row.verdict, p.classification());
        assert_eq!(row.max_nontrivial_modulus, p.max_nontrivial_modulus);
        assert_eq!(row.trivial_residual, p.trivial_residual);
    }
}
