use std::collections::BTreeMap;
use std::sync::Arc;

use dwstab::catalog::{builtin, default_builtin};
use dwstab::charmat::CharMatrixEvaluator;
use dwstab::model::{ConstantCoefficients, LinearCoefficients};
use dwstab::oracle::{
    compare_with_eigenvalues, derivative_eigen_residual, discretize, factorization_trace_moments, spectrum_compare,
    OracleError,
};
use dwstab::roots::{
    classify, find_all, winding_count, winding_number_raw, Classification, Contour, RootSettings, SearchRegion,
};
use dwstab::{CMatrix, C64};

fn diagonal(a: &[f64], tau: f64) -> LinearCoefficients {
    let n = a.len();
    let funcs = ConstantCoefficients {
        a: CMatrix::diagonal(&a.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>()),
        b: CMatrix::zeros(n, n),
    };
    LinearCoefficients::new_unchecked(Arc::new(funcs), CMatrix::identity(n), tau).unwrap()
}

#[test]
fn ode_multipliers_are_exponentials() {
    // Δ(z) = diag(1 − z e^{a_i τ}); roots at e^{−a_i τ}.
    let a = [0.5, -0.2, -0.2, 0.9];
    let tau = 1.3;
    let eval = CharMatrixEvaluator::new(diagonal(&a, tau), tau, 1e-11).unwrap();
    let set = find_all(&eval, &SearchRegion::from_min_multiplier(0.1).unwrap(), &RootSettings::default()).unwrap();
    assert_eq!(set.total_count, 4);
    assert_eq!(set.multiplicity_sum(), 4);
    for &ai in &[0.5, -0.2, 0.9] {
        let mu = (ai * tau).exp();
        let r = set.roots.iter().find(|r| (r.multiplier.re - mu).abs() < 1e-8).expect("multiplier found");
        let m = a.iter().filter(|&&x| x == ai).count();
        assert_eq!(r.multiplicity, m);
    }
    // Descending modulus order.
    assert!(set.roots.windows(2).all(|w| w[0].multiplier.norm() >= w[1].multiplier.norm()));
}

#[test]
fn contour_counts_are_integral_and_additive() {
    let a = [0.1, -0.4, 0.7];
    let tau = 1.0;
    let eval = CharMatrixEvaluator::new(diagonal(&a, tau), tau, 1e-11).unwrap();
    let s = RootSettings::default();
    let big = Contour::Circle { center: C64::new(0.0, 0.0), radius: 2.0 };
    let raw = winding_number_raw(&eval, &big, &s).unwrap();
    assert!((raw.re - 3.0).abs() < 1e-3 && raw.im.abs() < 1e-3);
    let left = Contour::Rectangle { lo: C64::new(-0.1, -1.0), hi: C64::new(0.8, 1.0) };
    let right = Contour::Rectangle { lo: C64::new(0.8, -1.0), hi: C64::new(1.9, 1.0) };
    let total = winding_count(&eval, &big, &s).unwrap();
    let split = winding_count(&eval, &left, &s).unwrap() + winding_count(&eval, &right, &s).unwrap();
    assert_eq!(total, split);
}

#[test]
fn roots_close_under_conjugation() {
    let b = default_builtin("scalar_linear").unwrap();
    let eval = CharMatrixEvaluator::new(b.coefficients(1e-8).unwrap(), b.orbit.shift(), 1e-10).unwrap();
    let set = find_all(&eval, &SearchRegion::from_min_multiplier(0.05).unwrap(), &RootSettings::default()).unwrap();
    for r in &set.roots {
        let c = r.z.conj();
        assert!(set.roots.iter().any(|o| (o.z - c).norm() < 1e-8 && o.multiplicity == r.multiplicity));
    }
}

#[test]
fn rectangle_region_search() {
    let a = [0.2, -0.3];
    let eval = CharMatrixEvaluator::new(diagonal(&a, 1.0), 1.0, 1e-11).unwrap();
    let region = SearchRegion::Rectangle { lo: C64::new(0.5, -0.5), hi: C64::new(1.0, 0.5) };
    let set = find_all(&eval, &region, &RootSettings::default()).unwrap();
    assert_eq!(set.roots.len(), 1);
    assert!((set.roots[0].z.re - (-0.2f64).exp()).abs() < 1e-9);
}

#[test]
fn invalid_region_rejected() {
    let eval = CharMatrixEvaluator::new(diagonal(&[0.0], 1.0), 1.0, 1e-10).unwrap();
    let bad = SearchRegion::Disk { center: C64::new(0.0, 0.0), radius: -1.0 };
    assert!(find_all(&eval, &bad, &RootSettings::default()).is_err());
    assert!(SearchRegion::from_min_multiplier(0.0).is_err());
}

#[test]
fn stuart_landau_verdict_and_margin() {
    let b = default_builtin("stuart_landau").unwrap();
    let eval = CharMatrixEvaluator::new(b.coefficients(1e-8).unwrap(), b.orbit.shift(), 1e-10).unwrap();
    let set = find_all(&eval, &SearchRegion::from_min_multiplier(0.1).unwrap(), &RootSettings::default()).unwrap();
    let v = classify(&set, 1e-6);
    assert_eq!(v.classification, Classification::Stable);
    assert!(v.trivial_simple);
    let expected = (-0.2 * std::f64::consts::PI).exp();
    assert!((v.margin + expected.ln()).abs() < 1e-6);
}

#[test]
fn unstable_transverse_mode() {
    let p = BTreeMap::from([("alpha".to_string(), 0.4)]);
    let b = builtin("stuart_landau", &p).unwrap();
    let eval = CharMatrixEvaluator::new(b.coefficients(1e-8).unwrap(), b.orbit.shift(), 1e-10).unwrap();
    let set = find_all(&eval, &SearchRegion::from_min_multiplier(0.1).unwrap(), &RootSettings::default()).unwrap();
    let v = classify(&set, 1e-6);
    assert_eq!(v.classification, Classification::Unstable);
    let w = v.witness.unwrap().multiplier;
    let expected = -(0.4 * std::f64::consts::PI).exp();
    assert!((w.re - expected).abs() < 1e-6 && w.im.abs() < 1e-9);
}

#[test]
fn discretization_factorization_and_trivial_eigenfunction() {
    let b = default_builtin("antiphase_pair").unwrap();
    let c = b.coefficients(1e-8).unwrap();
    let op = discretize(&c, 60, 1e-10).unwrap();
    assert_eq!(op.u_h.rows(), b.dim() * 61);
    for (tr_r, tr_cd) in factorization_trace_moments(&op, 3) {
        assert!((tr_r - tr_cd).norm() <= 1e-9 * (1.0 + tr_r.norm()));
    }
    assert!(derivative_eigen_residual(&op, &b.orbit) < 1e-2);
    let fine = discretize(&c, 120, 1e-10).unwrap();
    assert!(derivative_eigen_residual(&fine, &b.orbit) < derivative_eigen_residual(&op, &b.orbit));
}

#[test]
fn comparison_flags_missing_multiplier() {
    let a = [0.3];
    let eval = CharMatrixEvaluator::new(diagonal(&a, 1.0), 1.0, 1e-11).unwrap();
    let set = find_all(&eval, &SearchRegion::from_min_multiplier(0.05).unwrap(), &RootSettings::default()).unwrap();
    let mu = 0.3f64.exp();
    let good = compare_with_eigenvalues(&[C64::new(mu, 0.0), C64::new(0.0, 0.0)], 16, &set, 0.05, 1e-6);
    assert!(good.passed);
    let bad = compare_with_eigenvalues(&[C64::new(mu + 1e-3, 0.0)], 16, &set, 0.05, 1e-6);
    assert!(!bad.passed);
    let extra = compare_with_eigenvalues(&[C64::new(mu, 0.0), C64::new(0.5, 0.0)], 16, &set, 0.05, 1e-6);
    assert_eq!(extra.unmatched_eigenvalues.len(), 1);
    let other = discretize(&diagonal(&[0.6], 1.0), 16, 1e-11).unwrap();
    assert!(matches!(spectrum_compare(&other, &set, 0.05, 1e-6), Err(OracleError::Discrepancy(_))));
    let same = discretize(&diagonal(&a, 1.0), 16, 1e-11).unwrap();
    assert!(spectrum_compare(&same, &set, 0.05, 1e-6).unwrap().passed);
}
