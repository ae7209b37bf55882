use dwstab::numkernel::{eigenvalues, lu_factor, smallest_singular_value, solve, CMatrix, C64};
use proptest::prelude::*;

fn matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
        .prop_map(move |v| CMatrix::from_row_major(n, n, v.into_iter().map(|(r, i)| C64::new(r, i)).collect()).unwrap())
}

fn sized() -> impl Strategy<Value = (CMatrix, CMatrix)> {
    (1usize..7).prop_flat_map(|n| (matrix(n), matrix(n)))
}

/// Largest distance after greedy matching of two spectra.
fn spectrum_distance(a: &[C64], b: &[C64]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

proptest! {
    #[test]
    fn determinant_is_multiplicative((a, b) in sized()) {
        let da = lu_factor(&a).unwrap().determinant();
        let db = lu_factor(&b).unwrap().determinant();
        let dab = lu_factor(&a.matmul(&b)).unwrap().determinant();
        prop_assert!((dab - da * db).norm() <= 1e-12 * (1.0 + (da * db).norm()));
    }

    #[test]
    fn trace_equals_eigenvalue_sum((a, _) in sized()) {
        let sum: C64 = eigenvalues(&a).unwrap().eigenvalues.iter().sum();
        prop_assert!((sum - a.trace()).norm() <= 1e-11 * (1.0 + a.norm_fro()));
    }

    #[test]
    fn eigenvalues_invariant_under_similarity((a, p) in sized()) {
        // Well-conditioned S = I + P/(2n).
        let n = a.rows();
        let s = CMatrix::identity(n).add(&p.scale(C64::new(0.5 / n as f64, 0.0)));
        let sim = s.matmul(&a).matmul(&s.inverse().unwrap());
        let e1 = eigenvalues(&a).unwrap().eigenvalues;
        let e2 = eigenvalues(&sim).unwrap().eigenvalues;
        // Defective clusters perturb like ε^{1/n}.
        prop_assert!(spectrum_distance(&e1, &e2) <= 1e-6);
    }

    #[test]
    fn solve_residual_small((a, b) in sized()) {
        let n = a.rows();
        let m = a.add(&CMatrix::identity(n).scale(C64::new(3.0, 0.0)));
        let rhs = b.column(0);
        let x = solve(&m, &rhs).unwrap();
        let r = m.matvec(&x);
        let err = r.iter().zip(&rhs).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * (1.0 + m.norm_inf()));
    }
}

#[test]
fn companion_spectrum_is_polynomial_roots() {
    // (z - 1)(z - 2i)(z + 0.5)
    let roots = [C64::new(1.0, 0.0), C64::new(0.0, 2.0), C64::new(-0.5, 0.0)];
    let e1: C64 = roots.iter().sum();
    let e2 = roots[0] * roots[1] + roots[0] * roots[2] + roots[1] * roots[2];
    let e3 = roots[0] * roots[1] * roots[2];
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let m = CMatrix::from_row_major(3, 3, vec![e1, -e2, e3, one, z, z, z, one, z]).unwrap();
    let got = eigenvalues(&m).unwrap().eigenvalues;
    assert!(spectrum_distance(&roots, &got) < 1e-12);
}

#[test]
fn singular_matrix_has_zero_singular_value() {
    let m = CMatrix::from_real(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]).unwrap();
    assert!(smallest_singular_value(&m).unwrap() < 1e-12);
    assert!(lu_factor(&m).map(|lu| lu.is_singular()).unwrap_or(true));
}
