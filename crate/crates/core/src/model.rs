//! DDE problems, periodic orbits with a spatio-temporal symmetry, and the
//! linearized coefficient functions `A(t)`, `B(t)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkernel::{lu_factor, CMatrix, NumError, C64};

/// Sample times per period used by the validation checks.
pub const DEFAULT_VALIDATION_SAMPLES: usize = 64;

/// Relative tolerance for `Θ(h) p == τ`.
pub const SHIFT_DELAY_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("delay must be positive and finite, got {0}")]
    InvalidDelay(f64),
    #[error("theta must lie in (0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("dimension mismatch: {what} has dimension {got}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("symmetry matrix is not invertible")]
    SingularSymmetry,
    #[error("symmetry matrix must be real")]
    ComplexSymmetry,
    #[error("shift theta*p = {shift} does not match delay {delay}")]
    ShiftMismatch { shift: f64, delay: f64 },
    #[error("{check} residual {residual:.3e} exceeds {tol:.1e} (worst at t = {at})")]
    Validation { check: String, residual: f64, tol: f64, at: f64 },
    #[error("invalid Fourier data: {0}")]
    Fourier(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Right-hand side `f(x, y)` of `x'(t) = f(x(t), x(t - τ))` and its partial
/// derivatives. Implementations must be reentrant.
pub trait DdeSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    /// `∂₁f(x, y)`
    fn d1(&self, x: &[f64], y: &[f64]) -> CMatrix;
    /// `∂₂f(x, y)`
    fn d2(&self, x: &[f64], y: &[f64]) -> CMatrix;
}

#[derive(Clone)]
pub struct DdeProblem {
    pub system: Arc<dyn DdeSystem>,
    pub delay: f64,
}

impl fmt::Debug for DdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DdeProblem").field("dim", &self.dim()).field("delay", &self.delay).finish()
    }
}

impl DdeProblem {
    pub fn new(system: Arc<dyn DdeSystem>, delay: f64) -> Result<Self, ModelError> {
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(ModelError::InvalidDelay(delay));
        }
        Ok(Self { system, delay })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn rhs(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.system.rhs(x, y, &mut out);
        out
    }

    /// Worst relative mismatch between `d1`/`d2` and central differences of
    /// `f` at `(x, y)`, with step `1e-6 (‖x‖ + 1)`.
    pub fn derivative_mismatch(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let d1 = self.system.d1(x, y);
        let d2 = self.system.d2(x, y);
        let scale = |v: &[f64]| v.iter().map(|a| a.abs()).fold(0.0, f64::max) + 1.0;
        let mut worst: f64 = 0.0;
        for (which, analytic) in [(0, &d1), (1, &d2)] {
            let base = if which == 0 { x } else { y };
            let step = 1e-6 * scale(base);
            let mut fd = CMatrix::zeros(n, n);
            for j in 0..n {
                let mut plus = base.to_vec();
                let mut minus = base.to_vec();
                plus[j] += step;
                minus[j] -= step;
                let (fp, fm) = if which == 0 {
                    (self.rhs(&plus, y), self.rhs(&minus, y))
                } else {
                    (self.rhs(x, &plus), self.rhs(x, &minus))
                };
                for i in 0..n {
                    fd[(i, j)] = C64::new((fp[i] - fm[i]) / (2.0 * step), 0.0);
                }
            }
            let err = fd.max_abs_diff(analytic) / (analytic.norm_max() + 1.0);
            worst = worst.max(err);
        }
        worst
    }
}

/// Periodic vector-valued function with an exact derivative.
pub trait PeriodicOrbit: Send + Sync {
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
    fn eval(&self, t: f64, out: &mut [f64]);
    fn derivative(&self, t: f64, out: &mut [f64]);
}

/// Truncated real Fourier series
/// `x(t) = Σ_k a_k cos(2πkt/p) + b_k sin(2πkt/p)`, `k = 0, 1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierOrbit {
    period: f64,
    /// `(a_k, b_k)` pairs; `b_0` is ignored.
    modes: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Builds a truncated Fourier orbit from `(cos, sin)` coefficient pairs.
pub fn fourier_orbit(modes: Vec<(Vec<f64>, Vec<f64>)>, period: f64) -> Result<FourierOrbit, ModelError> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(ModelError::InvalidPeriod(period));
    }
    let dim = modes.first().map(|m| m.0.len()).ok_or_else(|| ModelError::Fourier("no modes".into()))?;
    if dim == 0 {
        return Err(ModelError::Fourier("zero-dimensional coefficients".into()));
    }
    for (k, (a, b)) in modes.iter().enumerate() {
        if a.len() != dim || b.len() != dim {
            return Err(ModelError::Fourier(format!("mode {k} has inconsistent length")));
        }
        if a.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(ModelError::Fourier(format!("mode {k} has non-finite coefficients")));
        }
    }
    Ok(FourierOrbit { period, modes })
}

impl FourierOrbit {
    pub fn modes(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.modes
    }
}

impl PeriodicOrbit for FourierOrbit {
    fn dim(&self) -> usize {
        self.modes[0].0.len()
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        let w = 2.0 * std::f64::consts::PI / self.period;
        out.copy_from_slice(&self.modes[0].0);
        for (k, (a, b)) in self.modes.iter().enumerate().skip(1) {
            let (s, c) = (w * k as f64 * t).sin_cos();
            for i in 0..out.len() {
                out[i] += a[i] * c + b[i] * s;
            }
        }
    }

    fn derivative(&self, t: f64, out: &mut [f64]) {
        let w = 2.0 * std::f64::consts::PI / self.period;
        out.iter_mut().for_each(|x| *x = 0.0);
        for (k, (a, b)) in self.modes.iter().enumerate().skip(1) {
            let wk = w * k as f64;
            let (s, c) = (wk * t).sin_cos();
            for i in 0..out.len() {
                out[i] += wk * (b[i] * c - a[i] * s);
            }
        }
    }
}

/// A periodic orbit together with one spatio-temporal symmetry
/// `h x(t) = x(t + Θ p)`.
#[derive(Clone)]
pub struct OrbitWithSymmetry {
    pub orbit: Arc<dyn PeriodicOrbit>,
    /// Real invertible `N × N` matrix (stored complex).
    pub h: CMatrix,
    pub theta: f64,
}

impl fmt::Debug for OrbitWithSymmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OrbitWithSymmetry")
            .field("period", &self.period())
            .field("theta", &self.theta)
            .field("h", &self.h)
            .finish()
    }
}

impl OrbitWithSymmetry {
    /// `theta` must lie in `(0, 1]`: zero would be a purely spatial symmetry
    /// with no time shift, and `1` stands for `h = I` acting over one full
    /// period.
    pub fn new(orbit: Arc<dyn PeriodicOrbit>, h: CMatrix, theta: f64) -> Result<Self, ModelError> {
        let n = orbit.dim();
        if !(orbit.period() > 0.0 && orbit.period().is_finite()) {
            return Err(ModelError::InvalidPeriod(orbit.period()));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(ModelError::InvalidTheta(theta));
        }
        if h.rows() != n || h.cols() != n {
            return Err(ModelError::Dimension { what: "symmetry h", expected: n, got: h.rows() });
        }
        if !h.is_real() {
            return Err(ModelError::ComplexSymmetry);
        }
        let lu = lu_factor(&h)?;
        if lu.is_singular() {
            return Err(ModelError::SingularSymmetry);
        }
        Ok(Self { orbit, h, theta })
    }

    pub fn dim(&self) -> usize {
        self.orbit.dim()
    }

    pub fn period(&self) -> f64 {
        self.orbit.period()
    }

    /// `Θ(h) p`
    pub fn shift(&self) -> f64 {
        self.theta * self.period()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.orbit.eval(t, &mut out);
        out
    }

    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.orbit.derivative(t, &mut out);
        out
    }
}

/// Real matrix-vector product for a real matrix stored complex.
pub fn real_matvec(m: &CMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)].re * v[j]).sum()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Time-dependent coefficients of `y' = A(t) y + B(t) y(t - τ)`.
/// Implementations must be reentrant.
pub trait CoefficientFunctions: Send + Sync {
    fn dim(&self) -> usize;
    /// Writes `A(t)` and `B(t)` into the provided buffers.
    fn eval(&self, t: f64, a: &mut CMatrix, b: &mut CMatrix);
}

/// Coefficients obtained by linearizing a DDE along an orbit.
struct Linearized {
    problem: DdeProblem,
    orbit: Arc<dyn PeriodicOrbit>,
}

impl CoefficientFunctions for Linearized {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn eval(&self, t: f64, a: &mut CMatrix, b: &mut CMatrix) {
        let n = self.dim();
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        self.orbit.eval(t, &mut x);
        self.orbit.eval(t - self.problem.delay, &mut y);
        *a = self.problem.system.d1(&x, &y);
        *b = self.problem.system.d2(&x, &y);
    }
}

/// Constant coefficient matrices.
pub struct ConstantCoefficients {
    pub a: CMatrix,
    pub b: CMatrix,
}

impl CoefficientFunctions for ConstantCoefficients {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn eval(&self, _t: f64, a: &mut CMatrix, b: &mut CMatrix) {
        a.clone_from(&self.a);
        b.clone_from(&self.b);
    }
}

/// Matrix-valued truncated Fourier series in `t` with period `p`; each mode
/// is a `(cos, sin)` pair of row-major `N × N` real matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients {
    pub dim: usize,
    pub period: f64,
    pub a_modes: Vec<(Vec<f64>, Vec<f64>)>,
    pub b_modes: Vec<(Vec<f64>, Vec<f64>)>,
}

impl FourierCoefficients {
    pub fn new(
        dim: usize,
        period: f64,
        a_modes: Vec<(Vec<f64>, Vec<f64>)>,
        b_modes: Vec<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self, ModelError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(ModelError::InvalidPeriod(period));
        }
        for (name, modes) in [("A", &a_modes), ("B", &b_modes)] {
            if modes.is_empty() {
                return Err(ModelError::Fourier(format!("{name} table has no modes")));
            }
            for (k, (c, s)) in modes.iter().enumerate() {
                if c.len() != dim * dim || s.len() != dim * dim {
                    return Err(ModelError::Fourier(format!(
                        "{name} mode {k} must have {} entries per matrix",
                        dim * dim
                    )));
                }
                if c.iter().chain(s).any(|v| !v.is_finite()) {
                    return Err(ModelError::Fourier(format!("{name} mode {k} is not finite")));
                }
            }
        }
        Ok(Self { dim, period, a_modes, b_modes })
    }

    fn sum(modes: &[(Vec<f64>, Vec<f64>)], w: f64, t: f64, out: &mut CMatrix) {
        let data = out.as_mut_slice();
        for (i, v) in data.iter_mut().enumerate() {
            *v = C64::new(modes[0].0[i], 0.0);
        }
        for (k, (c, s)) in modes.iter().enumerate().skip(1) {
            let (sn, cs) = (w * k as f64 * t).sin_cos();
            for (i, v) in data.iter_mut().enumerate() {
                v.re += c[i] * cs + s[i] * sn;
            }
        }
    }
}

impl CoefficientFunctions for FourierCoefficients {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, a: &mut CMatrix, b: &mut CMatrix) {
        let w = 2.0 * std::f64::consts::PI / self.period;
        if a.rows() != self.dim || a.cols() != self.dim {
            *a = CMatrix::zeros(self.dim, self.dim);
        }
        if b.rows() != self.dim || b.cols() != self.dim {
            *b = CMatrix::zeros(self.dim, self.dim);
        }
        Self::sum(&self.a_modes, w, t, a);
        Self::sum(&self.b_modes, w, t, b);
    }
}

/// `A(t)`, `B(t)` with the symmetry matrix `h` and delay `τ` satisfying
/// `h A(t) h⁻¹ = A(t + τ)` and `h B(t) h⁻¹ = B(t + τ)`.
#[derive(Clone)]
pub struct LinearCoefficients {
    funcs: Arc<dyn CoefficientFunctions>,
    h: CMatrix,
    h_inv: CMatrix,
    delay: f64,
    symmetry_residual: f64,
}

impl fmt::Debug for LinearCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearCoefficients")
            .field("dim", &self.dim())
            .field("delay", &self.delay)
            .field("symmetry_residual", &self.symmetry_residual)
            .finish()
    }
}

impl LinearCoefficients {
    /// Wraps coefficient functions without checking the symmetry relation;
    /// the sampled residual is still computed and reported.
    pub fn new_unchecked(
        funcs: Arc<dyn CoefficientFunctions>,
        h: CMatrix,
        delay: f64,
    ) -> Result<Self, ModelError> {
        let n = funcs.dim();
        if h.rows() != n || h.cols() != n {
            return Err(ModelError::Dimension { what: "symmetry h", expected: n, got: h.rows() });
        }
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(ModelError::InvalidDelay(delay));
        }
        let lu = lu_factor(&h)?;
        if lu.is_singular() {
            return Err(ModelError::SingularSymmetry);
        }
        let h_inv = lu.inverse()?;
        let mut out = Self { funcs, h, h_inv, delay, symmetry_residual: 0.0 };
        let (residual, _) = out.symmetry_residual_on_grid(delay, DEFAULT_VALIDATION_SAMPLES);
        out.symmetry_residual = residual;
        Ok(out)
    }

    /// Wraps coefficient functions and rejects them when the sampled
    /// symmetry relation fails, reporting the worst sample time.
    pub fn new(
        funcs: Arc<dyn CoefficientFunctions>,
        h: CMatrix,
        delay: f64,
        span: f64,
        tol: f64,
    ) -> Result<Self, ModelError> {
        let out = Self::new_unchecked(funcs, h, delay)?;
        let (residual, at) = out.symmetry_residual_on_grid(span, DEFAULT_VALIDATION_SAMPLES);
        if !(residual <= tol) {
            return Err(ModelError::Validation {
                check: "coefficient symmetry".into(),
                residual,
                tol,
                at,
            });
        }
        Ok(Self { symmetry_residual: residual, ..out })
    }

    pub fn dim(&self) -> usize {
        self.funcs.dim()
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn h_inv(&self) -> &CMatrix {
        &self.h_inv
    }

    pub fn symmetry_residual(&self) -> f64 {
        self.symmetry_residual
    }

    pub fn functions(&self) -> &Arc<dyn CoefficientFunctions> {
        &self.funcs
    }

    pub fn eval_into(&self, t: f64, a: &mut CMatrix, b: &mut CMatrix) {
        self.funcs.eval(t, a, b);
    }

    pub fn a(&self, t: f64) -> CMatrix {
        self.eval(t).0
    }

    pub fn b(&self, t: f64) -> CMatrix {
        self.eval(t).1
    }

    pub fn eval(&self, t: f64) -> (CMatrix, CMatrix) {
        let n = self.dim();
        let mut a = CMatrix::zeros(n, n);
        let mut b = CMatrix::zeros(n, n);
        self.funcs.eval(t, &mut a, &mut b);
        (a, b)
    }

    /// Worst of `‖h A(t) h⁻¹ − A(t+τ)‖` and the same for `B`, relative to
    /// `1 + ‖A(t+τ)‖`, over `samples` equispaced times in `[0, span)`.
    /// Returns the residual and the time where it is attained.
    pub fn symmetry_residual_on_grid(&self, span: f64, samples: usize) -> (f64, f64) {
        let mut worst = (0.0, 0.0);
        for i in 0..samples.max(1) {
            let t = span * i as f64 / samples.max(1) as f64;
            let (a0, b0) = self.eval(t);
            let (a1, b1) = self.eval(t + self.delay);
            let ra = self.h.matmul(&a0).matmul(&self.h_inv).max_abs_diff(&a1) / (1.0 + a1.norm_max());
            let rb = self.h.matmul(&b0).matmul(&self.h_inv).max_abs_diff(&b1) / (1.0 + b1.norm_max());
            let r = ra.max(rb);
            if !(r <= worst.0) {
                worst = (r, t);
            }
        }
        worst
    }
}

/// `A(t) = ∂₁f(x_*(t), x_*(t−τ))`, `B(t) = ∂₂f(x_*(t), x_*(t−τ))`.
///
/// Fails when the orbit's shift does not equal the delay or when the
/// sampled relations `h A h⁻¹ = A(·+τ)`, `h B h⁻¹ = B(·+τ)` exceed `tol`.
pub fn linearize(
    problem: &DdeProblem,
    orbit: &OrbitWithSymmetry,
    tol: f64,
) -> Result<LinearCoefficients, ModelError> {
    if problem.dim() != orbit.dim() {
        return Err(ModelError::Dimension { what: "orbit", expected: problem.dim(), got: orbit.dim() });
    }
    check_shift(orbit.shift(), problem.delay)?;
    let funcs = Arc::new(Linearized { problem: problem.clone(), orbit: orbit.orbit.clone() });
    LinearCoefficients::new(funcs, orbit.h.clone(), problem.delay, orbit.period(), tol)
}

pub fn check_shift(shift: f64, delay: f64) -> Result<(), ModelError> {
    if (shift - delay).abs() > SHIFT_DELAY_RTOL * delay.abs() {
        return Err(ModelError::ShiftMismatch { shift, delay });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub max_residual: f64,
    /// Sample time (or sample index for state checks) of the worst residual.
    pub worst_at: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tol: f64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, (residual, at): (f64, f64), tol: f64) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            max_residual: residual,
            worst_at: at,
            passed: residual <= tol,
        });
    }
}

fn worst_over<F: FnMut(f64) -> f64>(times: impl Iterator<Item = f64>, mut f: F) -> (f64, f64) {
    let mut worst = (0.0, 0.0);
    for t in times {
        let r = f(t);
        if !(r <= worst.0) {
            worst = (r, t);
        }
    }
    worst
}

/// Numerical check of the standing hypotheses: the orbit solves the DDE,
/// `f` is `h`-equivariant, `h x_*(t) = x_*(t + Θp)`, and `Θ p = τ`.
pub fn validate_hypotheses(problem: &DdeProblem, orbit: &OrbitWithSymmetry, tol: f64) -> ValidationReport {
    validate_hypotheses_on(problem, orbit, tol, DEFAULT_VALIDATION_SAMPLES)
}

pub fn validate_hypotheses_on(
    problem: &DdeProblem,
    orbit: &OrbitWithSymmetry,
    tol: f64,
    samples: usize,
) -> ValidationReport {
    let mut report = ValidationReport { tol, checks: Vec::new() };
    let p = orbit.period();
    let tau = problem.delay;
    let times = || (0..samples).map(move |i| p * i as f64 / samples as f64);

    let dde = worst_over(times(), |t| {
        let x = orbit.eval(t);
        let y = orbit.eval(t - tau);
        let lhs = orbit.derivative(t);
        let rhs = problem.rhs(&x, &y);
        max_abs_diff(&lhs, &rhs) / (1.0 + sup_norm(&rhs))
    });
    report.push("orbit_solves_dde", dde, tol);

    // Equivariance at orbit states and at deterministic off-orbit states.
    let h = &orbit.h;
    let equi = worst_over((0..samples).map(|i| i as f64), |i| {
        let t = p * i / samples as f64;
        let mut x = orbit.eval(t);
        let mut y = orbit.eval(t - 0.37 * p);
        let s = 0.5 + (i * 0.61803).fract();
        for (k, (a, b)) in x.iter_mut().zip(y.iter_mut()).enumerate() {
            *a = *a * s + 0.1 * ((k as f64 + 1.0) * (i + 1.0)).sin();
            *b = *b * (1.5 - s) + 0.1 * ((k as f64 + 2.0) * (i + 0.5)).cos();
        }
        let lhs = problem.rhs(&real_matvec(h, &x), &real_matvec(h, &y));
        let rhs = real_matvec(h, &problem.rhs(&x, &y));
        max_abs_diff(&lhs, &rhs) / (1.0 + sup_norm(&rhs))
    });
    report.push("equivariance", equi, tol);

    report.push("spatio_temporal", spatio_temporal_residual(orbit, samples), tol);

    let shift = orbit.shift();
    let shift_res = (shift - tau).abs() / tau.abs().max(f64::MIN_POSITIVE);
    report.push("shift_equals_delay", (shift_res, shift), SHIFT_DELAY_RTOL);
    report
}

/// `max_t ‖h x_*(t) − x_*(t + Θp)‖∞ / (1 + ‖x_*‖)` on an equispaced grid.
pub fn spatio_temporal_residual(orbit: &OrbitWithSymmetry, samples: usize) -> (f64, f64) {
    let p = orbit.period();
    let shift = orbit.shift();
    worst_over((0..samples).map(|i| p * i as f64 / samples as f64), |t| {
        let hx = real_matvec(&orbit.h, &orbit.eval(t));
        let xs = orbit.eval(t + shift);
        max_abs_diff(&hx, &xs) / (1.0 + sup_norm(&xs))
    })
}

/// Validation available without a right-hand side: symmetry relation of
/// the coefficient tables and the spatio-temporal relation of the orbit.
pub fn validate_coefficients(coeffs: &LinearCoefficients, orbit: &OrbitWithSymmetry, tol: f64) -> ValidationReport {
    let mut report = ValidationReport { tol, checks: Vec::new() };
    report.push(
        "coefficient_symmetry",
        coeffs.symmetry_residual_on_grid(orbit.period(), DEFAULT_VALIDATION_SAMPLES),
        tol,
    );
    report.push("spatio_temporal", spatio_temporal_residual(orbit, DEFAULT_VALIDATION_SAMPLES), tol);
    let shift = orbit.shift();
    let tau = coeffs.delay();
    report.push("shift_equals_delay", ((shift - tau).abs() / tau, shift), SHIFT_DELAY_RTOL);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    struct Dummy;
    impl DdeSystem for Dummy {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        fn d1(&self, _x: &[f64], _y: &[f64]) -> CMatrix {
            CMatrix::zeros(2, 2)
        }
        fn d2(&self, _x: &[f64], _y: &[f64]) -> CMatrix {
            CMatrix::zeros(2, 2)
        }
    }

    fn swap() -> CMatrix {
        CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn fourier_single_cosine_mode() {
        let orbit = fourier_orbit(vec![(vec![0.0], vec![0.0]), (vec![1.0], vec![0.0])], 2.0).unwrap();
        let mut x = [0.0];
        orbit.eval(0.0, &mut x);
        assert_eq!(x[0], 1.0);
        orbit.derivative(0.0, &mut x);
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn fourier_mode_k_derivative() {
        let p = 3.0;
        let k = 3usize;
        let mut modes = vec![(vec![0.0], vec![0.0]); k + 1];
        modes[k].0[0] = 1.0;
        let orbit = fourier_orbit(modes, p).unwrap();
        let w = 2.0 * PI * k as f64 / p;
        for &t in &[0.1, 0.77, 2.5] {
            let mut d = [0.0];
            orbit.derivative(t, &mut d);
            assert!((d[0] + w * (w * t).sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn fourier_rejects_bad_period() {
        assert_eq!(fourier_orbit(vec![(vec![1.0], vec![0.0])], 0.0), Err(ModelError::InvalidPeriod(0.0)));
        assert!(fourier_orbit(vec![(vec![1.0], vec![0.0]), (vec![1.0, 2.0], vec![0.0])], 1.0).is_err());
    }

    #[test]
    fn antiphase_sine_orbit_spatio_temporal() {
        // (sin t, sin(t + π)) with the swap symmetry and half-period shift.
        let orbit = fourier_orbit(
            vec![(vec![0.0, 0.0], vec![0.0, 0.0]), (vec![0.0, 0.0], vec![1.0, -1.0])],
            2.0 * PI,
        )
        .unwrap();
        let ows = OrbitWithSymmetry::new(Arc::new(orbit), swap(), 0.5).unwrap();
        let problem = DdeProblem::new(Arc::new(Dummy), PI).unwrap();
        let report = validate_hypotheses(&problem, &ows, 1e-12);
        assert!(report.check("spatio_temporal").unwrap().max_residual < 1e-15);
        assert!(report.check("shift_equals_delay").unwrap().passed);
    }

    #[test]
    fn zero_theta_is_rejected() {
        let orbit = fourier_orbit(vec![(vec![0.0], vec![0.0])], 1.0).unwrap();
        let err = OrbitWithSymmetry::new(Arc::new(orbit), CMatrix::identity(1), 0.0).unwrap_err();
        assert_eq!(err, ModelError::InvalidTheta(0.0));
    }

    #[test]
    fn shift_mismatch_is_flagged() {
        let orbit = fourier_orbit(vec![(vec![0.0, 0.0], vec![0.0, 0.0])], 2.0).unwrap();
        let ows = OrbitWithSymmetry::new(Arc::new(orbit), swap(), 0.5).unwrap();
        let problem = DdeProblem::new(Arc::new(Dummy), 1.5).unwrap();
        let report = validate_hypotheses(&problem, &ows, 1e-8);
        assert!(!report.check("shift_equals_delay").unwrap().passed);
        assert!(!report.passed());
        assert!(matches!(linearize(&problem, &ows, 1e-8), Err(ModelError::ShiftMismatch { .. })));
    }

    #[test]
    fn singular_symmetry_rejected() {
        let orbit = fourier_orbit(vec![(vec![0.0, 0.0], vec![0.0, 0.0])], 2.0).unwrap();
        let h = CMatrix::from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(OrbitWithSymmetry::new(Arc::new(orbit), h, 0.5).unwrap_err(), ModelError::SingularSymmetry);
    }
}
