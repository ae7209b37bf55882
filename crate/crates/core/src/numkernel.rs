//! Dense complex linear algebra: matrices, LU with partial pivoting and
//! full eigenvalue extraction.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Largest matrix dimension accepted by [`eigenvalues`].
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// Relative pivot threshold below which a factorization is flagged singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("eigenvalue iteration did not converge after {iterations} sweeps ({} eigenvalues recovered)", partial.len())]
    NoConvergence { iterations: usize, partial: Vec<C64> },
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major complex entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, NumError> {
        if data.len() != rows * cols {
            return Err(NumError::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        if data.iter().any(|z| !z.is_finite()) {
            return Err(NumError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Promotes row-major real entries to a complex matrix.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self, NumError> {
        Self::from_row_major(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * n + i] = e;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    /// True when every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().map(|z| z.norm()).sum())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows, other.cols);
        matmul_into(self, other, &mut out);
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + block.cols]
                .copy_from_slice(&block.data[i * block.cols..(i + 1) * block.cols]);
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Max absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn inverse(&self) -> Result<Self, NumError> {
        let lu = lu_factor(self)?;
        lu.inverse()
    }
}

/// `out = a * b`, reusing the storage of `out`.
pub fn matmul_into(a: &CMatrix, b: &CMatrix, out: &mut CMatrix) {
    assert_eq!(a.cols, b.rows);
    assert_eq!((out.rows, out.cols), (a.rows, b.cols));
    let (n, m, p) = (a.rows, a.cols, b.cols);
    for x in out.data.iter_mut() {
        *x = C64::new(0.0, 0.0);
    }
    for i in 0..n {
        let orow = &mut out.data[i * p..(i + 1) * p];
        for k in 0..m {
            let aik = a.data[i * m + k];
            let brow = &b.data[k * p..(k + 1) * p];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// LU factorization `P M = L U` with unit-lower `L`.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
    determinant: C64,
    singular: bool,
    min_pivot: f64,
}

/// Factorizes a square matrix with partial pivoting on complex modulus.
///
/// A near-zero pivot does not abort the factorization; it sets the
/// singular flag and the determinant is still returned.
pub fn lu_factor(m: &CMatrix) -> Result<LuFactorization, NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare { rows: m.rows, cols: m.cols });
    }
    if !m.is_finite() {
        return Err(NumError::NonFinite);
    }
    let n = m.rows;
    let mut lu = m.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let threshold = SINGULAR_PIVOT_RATIO * m.norm_max();
    let mut singular = false;
    let mut min_pivot = f64::INFINITY;

    for k in 0..n {
        let (p, pmag) = (k..n)
            .map(|i| (i, lu[i * n + k].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        min_pivot = min_pivot.min(pmag);
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        if pmag <= threshold || pmag == 0.0 {
            singular = true;
            if pmag == 0.0 {
                continue;
            }
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let l = lu[i * n + k] / pivot;
            lu[i * n + k] = l;
            if l == C64::new(0.0, 0.0) {
                continue;
            }
            for j in k + 1..n {
                let u = lu[k * n + j];
                lu[i * n + j] -= l * u;
            }
        }
    }
    let determinant = (0..n).map(|i| lu[i * n + i]).fold(C64::new(sign, 0.0), |acc, d| acc * d);
    Ok(LuFactorization { n, lu, perm, determinant, singular, min_pivot })
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn determinant(&self) -> C64 {
        self.determinant
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>, NumError> {
        if self.singular {
            return Err(NumError::Singular);
        }
        if b.len() != self.n {
            return Err(NumError::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let n = self.n;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Solves `M X = B` column by column.
    pub fn solve_matrix(&self, b: &CMatrix) -> Result<CMatrix, NumError> {
        if b.rows != self.n {
            return Err(NumError::DimensionMismatch { expected: self.n, got: b.rows });
        }
        let mut out = CMatrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let x = self.solve(&b.column(j))?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<CMatrix, NumError> {
        self.solve_matrix(&CMatrix::identity(self.n))
    }
}

/// Shorthand for factor-then-solve.
pub fn solve(m: &CMatrix, b: &[C64]) -> Result<Vec<C64>, NumError> {
    lu_factor(m)?.solve(b)
}

/// Eigenvalues of a square matrix with an a-priori residual bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Sorted by descending modulus, then descending real part, then
    /// descending imaginary part.
    pub eigenvalues: Vec<C64>,
    /// Upper bound on the smallest singular value of `M - λI` for every
    /// returned `λ` (backward-error bound of the QR iteration).
    pub residual_bound: f64,
}

impl Spectrum {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |z| z.norm())
    }
}

/// Deterministic ordering used for every reported spectrum.
pub fn eigen_order(a: &C64, b: &C64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

pub fn eigenvalues(m: &CMatrix) -> Result<Spectrum, NumError> {
    eigenvalues_with_cap(m, DEFAULT_DIMENSION_CAP)
}

/// All eigenvalues via Hessenberg reduction and shifted QR iteration.
///
/// Real input takes the Francis double-shift path; anything else goes
/// through the complex Schur form.
pub fn eigenvalues_with_cap(m: &CMatrix, cap: usize) -> Result<Spectrum, NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare { rows: m.rows, cols: m.cols });
    }
    if m.rows > cap {
        return Err(NumError::DimensionCap { dim: m.rows, cap });
    }
    if !m.is_finite() {
        return Err(NumError::NonFinite);
    }
    let n = m.rows;
    if n == 0 {
        return Ok(Spectrum { eigenvalues: vec![], residual_bound: 0.0 });
    }
    let max_sweeps = 100 * n.max(10);
    let mut eigs: Vec<C64> = if m.is_real() {
        let a = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| m[(i, j)].re);
        let schur = nalgebra::linalg::Schur::try_new(a, f64::EPSILON, max_sweeps)
            .ok_or(NumError::NoConvergence { iterations: max_sweeps, partial: vec![] })?;
        schur.complex_eigenvalues().iter().copied().collect()
    } else {
        let a = nalgebra::DMatrix::<C64>::from_fn(n, n, |i, j| m[(i, j)]);
        let schur = nalgebra::linalg::Schur::try_new(a, f64::EPSILON, max_sweeps)
            .ok_or(NumError::NoConvergence { iterations: max_sweeps, partial: vec![] })?;
        let (_, t) = schur.unpack();
        (0..n).map(|i| t[(i, i)]).collect()
    };
    if eigs.iter().any(|z| !z.is_finite()) {
        let partial = eigs.into_iter().filter(|z| z.is_finite()).collect();
        return Err(NumError::NoConvergence { iterations: max_sweeps, partial });
    }
    eigs.sort_by(eigen_order);
    // Backward stability of Householder/QR: computed eigenvalues are exact
    // for M + E with ||E||_2 <= c n eps ||M||_F.
    let residual_bound = 10.0 * n as f64 * f64::EPSILON * m.norm_fro().max(f64::MIN_POSITIVE);
    Ok(Spectrum { eigenvalues: eigs, residual_bound })
}

/// Estimate of the smallest singular value via inverse iteration on
/// `M^H M`. Returns 0 for matrices singular to working precision.
pub fn smallest_singular_value(m: &CMatrix) -> Result<f64, NumError> {
    let lu = lu_factor(m)?;
    if lu.determinant() == C64::new(0.0, 0.0) {
        return Ok(0.0);
    }
    let n = m.rows;
    let mh = CMatrix::from_fn(n, n, |i, j| m[(j, i)].conj());
    let luh = lu_factor(&mh)?;
    let mut v: Vec<C64> = (0..n).map(|i| C64::new(1.0 + 0.1 * i as f64, 0.3)).collect();
    let mut sigma = f64::INFINITY;
    for _ in 0..30 {
        let nv = vec_norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        // (M^H M)^{-1} v = M^{-1} M^{-H} v
        let w = match luh.solve(&v).and_then(|w| lu.solve(&w)) {
            Ok(w) => w,
            Err(_) => return Ok(0.0),
        };
        let nw = vec_norm(&w);
        if !nw.is_finite() || nw == 0.0 {
            return Ok(0.0);
        }
        let est = (1.0 / nw).sqrt();
        let converged = (sigma - est).abs() <= 1e-12 * est;
        sigma = est;
        v = w;
        if converged {
            break;
        }
    }
    Ok(sigma)
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm_inf(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn determinant_of_identity_and_2x2() {
        let lu = lu_factor(&CMatrix::identity(3)).unwrap();
        assert_eq!(lu.determinant(), c(1.0, 0.0));
        let m = CMatrix::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let det = lu_factor(&m).unwrap().determinant();
        assert!((det - c(-2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_flag_still_reports_determinant() {
        let m = CMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        let lu = lu_factor(&m).unwrap();
        assert!(lu.is_singular());
        assert!(lu.determinant().norm() < 1e-15);
        assert_eq!(lu.solve(&[c(1.0, 0.0), c(0.0, 0.0)]), Err(NumError::Singular));
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let b = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0)];
        assert_eq!(solve(&CMatrix::identity(3), &b).unwrap(), b);
        let d = CMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 4.0]).unwrap();
        let x = solve(&d, &[c(2.0, 0.0), c(8.0, 0.0)]).unwrap();
        assert_eq!(x, vec![c(1.0, 0.0), c(2.0, 0.0)]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = CMatrix::zeros(2, 3);
        assert!(matches!(lu_factor(&m), Err(NumError::NotSquare { .. })));
        assert!(matches!(eigenvalues(&m), Err(NumError::NotSquare { .. })));
        let big = CMatrix::zeros(5, 5);
        assert_eq!(eigenvalues_with_cap(&big, 4), Err(NumError::DimensionCap { dim: 5, cap: 4 }));
        assert!(CMatrix::from_real(1, 1, &[f64::NAN]).is_err());
    }

    #[test]
    fn swap_matrix_eigenvalues() {
        let m = CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let s = eigenvalues(&m).unwrap();
        assert!((s.eigenvalues[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((s.eigenvalues[1] - c(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn diagonal_eigenvalues_are_ordered() {
        let m = CMatrix::diagonal(&[c(-1.0, 0.0), c(3.0, 0.0), c(0.0, 2.0)]);
        let s = eigenvalues(&m).unwrap();
        let expect = [c(3.0, 0.0), c(0.0, 2.0), c(-1.0, 0.0)];
        for (a, b) in s.eigenvalues.iter().zip(expect) {
            assert!((a - b).norm() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn companion_of_z3_minus_one() {
        // z^3 - 1: companion with last column (1, 0, 0)
        let m = CMatrix::from_real(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let s = eigenvalues(&m).unwrap();
        for k in 0..3 {
            let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 3.0);
            let d = s.eigenvalues.iter().map(|e| (e - w).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-10, "root {w} missing, distance {d}");
        }
    }

    #[test]
    fn ties_break_on_real_then_imaginary_part() {
        let m = CMatrix::diagonal(&[c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)]);
        let s = eigenvalues(&m).unwrap();
        assert_eq!(s.eigenvalues, vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(-1.0, 0.0)]);
    }

    #[test]
    fn smallest_singular_value_of_diagonal() {
        let m = CMatrix::diagonal(&[c(3.0, 0.0), c(0.0, 0.5), c(2.0, 0.0)]);
        let s = smallest_singular_value(&m).unwrap();
        assert!((s - 0.5).abs() < 1e-10);
    }
}
