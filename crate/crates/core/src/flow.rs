//! Fundamental solutions of the z-parameterized linear ODE family
//! `F' = [A(t) + z B(t) h⁻¹] F`, `F(0) = I`, together with `∂F/∂z`.

use thiserror::Error;

use crate::model::LinearCoefficients;
use crate::numkernel::{lu_factor, CMatrix, NumError, C64};

pub const DEFAULT_FLOW_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_STEPS: usize = 2_000_000;

/// State magnitudes above this are renormalized into `log_scale`.
const RENORMALIZE_ABOVE: f64 = 1e100;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FlowError {
    #[error("step size underflow at t = {t} (h = {h:.3e}); the system looks stiff")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    BlowUp { t: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("invalid integration span: {0}")]
    InvalidSpan(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Which ODE coefficient multiplies `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formula {
    /// `A(t) + z B(t) h⁻¹`
    General,
    /// `A(t) + z B(t)`; valid only when `h = I`.
    Monodromy,
}

/// `F(t_end, z)` and `∂F/∂z(t_end, z)`, each stored divided by
/// `exp(log_scale)` so that fast-growing flows stay representable.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub f: CMatrix,
    pub dfdz: CMatrix,
    pub log_scale: f64,
    pub t_end: f64,
    pub z: C64,
    pub steps_taken: usize,
    pub error_estimate: f64,
}

impl FlowResult {
    /// Unscaled `F(t_end, z)`; entries overflow to infinity if the flow grew
    /// beyond double range.
    pub fn fundamental(&self) -> CMatrix {
        self.f.scale(C64::new(self.log_scale.exp(), 0.0))
    }

    /// Unscaled `∂F/∂z(t_end, z)`.
    pub fn derivative(&self) -> CMatrix {
        self.dfdz.scale(C64::new(self.log_scale.exp(), 0.0))
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI step control (Hairer–Wanner).
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

struct Integration {
    states: Vec<Vec<C64>>,
    log_scales: Vec<f64>,
    steps: usize,
    error_estimate: f64,
}

/// Adaptive DOPRI5 for a linear homogeneous complex system, stopping
/// exactly at each of `targets` (monotone in one direction from `t0`).
/// Linearity allows renormalizing the state without changing the flow.
fn integrate_linear<R>(
    mut rhs: R,
    t0: f64,
    y0: Vec<C64>,
    targets: &[f64],
    tol: f64,
) -> Result<Integration, FlowError>
where
    R: FnMut(f64, &[C64], &mut [C64]),
{
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(FlowError::InvalidSpan(format!("tolerance {tol}")));
    }
    let Some(&t_last) = targets.last() else {
        return Ok(Integration { states: vec![], log_scales: vec![], steps: 0, error_estimate: 0.0 });
    };
    let dir = if t_last >= t0 { 1.0 } else { -1.0 };
    let mut prev = t0;
    for &t in targets {
        if !t.is_finite() || (t - prev) * dir < 0.0 {
            return Err(FlowError::InvalidSpan("targets must be finite and monotone".into()));
        }
        prev = t;
    }
    let span = (t_last - t0).abs();
    let dim = y0.len();
    let mut y = y0;
    let mut log_scale = 0.0;
    let mut t = t0;
    let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); dim]; 7];
    let mut ytmp = vec![C64::new(0.0, 0.0); dim];
    let mut ynew = vec![C64::new(0.0, 0.0); dim];
    let mut states = Vec::with_capacity(targets.len());
    let mut log_scales = Vec::with_capacity(targets.len());
    let mut steps = 0usize;
    let mut error_estimate = 0.0;
    let mut fac_old: f64 = 1e-4;

    rhs(t, &y, &mut k[0]);
    let mut h = initial_step(&y, &k[0], span, tol);
    let min_step = 1e-12 * span.max(f64::MIN_POSITIVE);

    for &target in targets {
        while (target - t) * dir > 0.0 {
            let remaining = (target - t).abs();
            let mut step = h.min(remaining);
            let hits = step >= remaining * (1.0 - 1e-12);
            if hits {
                step = remaining;
            }
            let hs = step * dir;
            if step < min_step && !hits {
                return Err(FlowError::StepUnderflow { t, h: step });
            }
            if steps >= DEFAULT_MAX_STEPS {
                return Err(FlowError::TooManySteps(DEFAULT_MAX_STEPS));
            }

            stage(&mut ytmp, &y, hs, &k, &[(0, A21)]);
            rhs(t + C2 * hs, &ytmp, &mut k[1]);
            stage(&mut ytmp, &y, hs, &k, &[(0, A31), (1, A32)]);
            rhs(t + C3 * hs, &ytmp, &mut k[2]);
            stage(&mut ytmp, &y, hs, &k, &[(0, A41), (1, A42), (2, A43)]);
            rhs(t + C4 * hs, &ytmp, &mut k[3]);
            stage(&mut ytmp, &y, hs, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
            rhs(t + C5 * hs, &ytmp, &mut k[4]);
            stage(&mut ytmp, &y, hs, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
            rhs(t + hs, &ytmp, &mut k[5]);
            stage(&mut ynew, &y, hs, &k, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)]);
            let t_new = if hits { target } else { t + hs };
            rhs(t_new, &ynew, &mut k[6]);
            steps += 1;

            let mut acc = 0.0;
            for i in 0..dim {
                let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6
                    + k[6][i] * E7)
                    * hs;
                let sre = tol + tol * y[i].re.abs().max(ynew[i].re.abs());
                let sim = tol + tol * y[i].im.abs().max(ynew[i].im.abs());
                acc += (e.re / sre).powi(2) + (e.im / sim).powi(2);
            }
            let err = (acc / (2 * dim) as f64).sqrt();
            if !err.is_finite() {
                if y.iter().chain(&k[0]).any(|v| !v.is_finite()) {
                    return Err(FlowError::BlowUp { t });
                }
                h = step * FAC_MIN;
                continue;
            }

            let fac11 = err.powf(0.2 - BETA * 0.75);
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            if err <= 1.0 {
                fac_old = err.max(1e-4);
                error_estimate += err * tol;
                t = t_new;
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                let big = y.iter().map(|v| v.re.abs().max(v.im.abs())).fold(0.0, f64::max);
                if !big.is_finite() {
                    return Err(FlowError::BlowUp { t });
                }
                if big > RENORMALIZE_ABOVE {
                    let s = 1.0 / big;
                    y.iter_mut().for_each(|v| *v *= s);
                    k[0].iter_mut().for_each(|v| *v *= s);
                    log_scale += big.ln();
                }
                if !hits {
                    h = step / fac;
                }
            } else {
                h = step / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            }
        }
        states.push(y.clone());
        log_scales.push(log_scale);
    }
    Ok(Integration { states, log_scales, steps, error_estimate })
}

#[inline]
fn stage(out: &mut [C64], y: &[C64], h: f64, k: &[Vec<C64>], coeffs: &[(usize, f64)]) {
    out.copy_from_slice(y);
    for &(j, a) in coeffs {
        let ha = h * a;
        for (o, kv) in out.iter_mut().zip(&k[j]) {
            *o += kv * ha;
        }
    }
}

fn initial_step(y: &[C64], f: &[C64], span: f64, tol: f64) -> f64 {
    let sc = |v: &C64| tol + tol * v.norm();
    let d0 = (y.iter().map(|v| (v.norm() / sc(v)).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    let d1 = (f.iter().zip(y).map(|(fv, v)| (fv.norm() / sc(v)).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0.min(span).max(1e-10 * span)
}

/// Right-hand side of the augmented system on the packed state `[F | G]`.
struct LinearFlow<'a> {
    coeffs: &'a LinearCoefficients,
    z: C64,
    formula: Formula,
    with_derivative: bool,
    zero_b: bool,
    a: CMatrix,
    b: CMatrix,
    bh: CMatrix,
    m: CMatrix,
}

impl<'a> LinearFlow<'a> {
    fn new(coeffs: &'a LinearCoefficients, z: C64, formula: Formula, with_derivative: bool, zero_b: bool) -> Self {
        let n = coeffs.dim();
        Self {
            coeffs,
            z,
            formula,
            with_derivative,
            zero_b,
            a: CMatrix::zeros(n, n),
            b: CMatrix::zeros(n, n),
            bh: CMatrix::zeros(n, n),
            m: CMatrix::zeros(n, n),
        }
    }

    fn eval(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        let n = self.coeffs.dim();
        self.coeffs.eval_into(t, &mut self.a, &mut self.b);
        if self.zero_b {
            self.m.clone_from(&self.a);
        } else {
            match self.formula {
                Formula::General => crate::numkernel::matmul_into(&self.b, self.coeffs.h_inv(), &mut self.bh),
                Formula::Monodromy => self.bh.clone_from(&self.b),
            }
            let (m, a, bh) = (self.m.as_mut_slice(), self.a.as_slice(), self.bh.as_slice());
            for i in 0..n * n {
                m[i] = a[i] + self.z * bh[i];
            }
        }
        let nn = n * n;
        mul_square(self.m.as_slice(), &y[..nn], &mut dy[..nn], n);
        if self.with_derivative {
            mul_square(self.m.as_slice(), &y[nn..], &mut dy[nn..], n);
            if !self.zero_b {
                let bh = self.bh.as_slice();
                for i in 0..n {
                    for k in 0..n {
                        let c = bh[i * n + k];
                        if c == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for j in 0..n {
                            dy[nn + i * n + j] += c * y[k * n + j];
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn mul_square(m: &[C64], x: &[C64], out: &mut [C64], n: usize) {
    for i in 0..n {
        let orow = &mut out[i * n..(i + 1) * n];
        orow.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for k in 0..n {
            let c = m[i * n + k];
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, &xv) in orow.iter_mut().zip(&x[k * n..(k + 1) * n]) {
                *o += c * xv;
            }
        }
    }
}

fn identity_state(n: usize, with_derivative: bool) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); if with_derivative { 2 * n * n } else { n * n }];
    for i in 0..n {
        y[i * n + i] = C64::new(1.0, 0.0);
    }
    y
}

/// Integrates the fundamental solution and its `z`-derivative from 0 to
/// `t_end` with mixed absolute/relative tolerance `tol`.
pub fn fundamental_solution(
    coeffs: &LinearCoefficients,
    z: C64,
    t_end: f64,
    tol: f64,
) -> Result<FlowResult, FlowError> {
    fundamental_solution_with(coeffs, z, t_end, tol, Formula::General)
}

pub fn fundamental_solution_with(
    coeffs: &LinearCoefficients,
    z: C64,
    t_end: f64,
    tol: f64,
    formula: Formula,
) -> Result<FlowResult, FlowError> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(FlowError::InvalidSpan(format!("t_end = {t_end}")));
    }
    if !z.is_finite() {
        return Err(FlowError::InvalidSpan(format!("z = {z}")));
    }
    let n = coeffs.dim();
    let y0 = identity_state(n, true);
    let mut flow = LinearFlow::new(coeffs, z, formula, true, false);
    let run = if t_end == 0.0 {
        Integration { states: vec![y0.clone()], log_scales: vec![0.0], steps: 0, error_estimate: 0.0 }
    } else {
        integrate_linear(|t, y, dy| flow.eval(t, y, dy), 0.0, y0, &[t_end], tol)?
    };
    let state = &run.states[0];
    let nn = n * n;
    Ok(FlowResult {
        f: CMatrix::from_row_major(n, n, state[..nn].to_vec()).map_err(|_| FlowError::BlowUp { t: t_end })?,
        dfdz: CMatrix::from_row_major(n, n, state[nn..].to_vec()).map_err(|_| FlowError::BlowUp { t: t_end })?,
        log_scale: run.log_scales[0],
        t_end,
        z,
        steps_taken: run.steps,
        error_estimate: run.error_estimate,
    })
}

/// `Y_A(t_end)`: fundamental solution of `y' = A(t) y` with `Y_A(0) = I`.
pub fn y_a_flow(coeffs: &LinearCoefficients, t_end: f64, tol: f64) -> Result<CMatrix, FlowError> {
    if !(t_end >= 0.0) {
        return Err(FlowError::InvalidSpan(format!("t_end = {t_end}")));
    }
    Ok(y_a_at_times(coeffs, &[t_end], tol)?.remove(0))
}

/// `Y_A` at arbitrary (possibly negative) times, in input order, using one
/// backward and one forward sweep from `t = 0`.
pub fn y_a_at_times(coeffs: &LinearCoefficients, times: &[f64], tol: f64) -> Result<Vec<CMatrix>, FlowError> {
    let n = coeffs.dim();
    let mut out = vec![CMatrix::identity(n); times.len()];
    for sign in [-1.0, 1.0] {
        let mut idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] * sign > 0.0).collect();
        if idx.is_empty() {
            continue;
        }
        idx.sort_by(|&i, &j| (times[i] * sign).total_cmp(&(times[j] * sign)));
        let targets: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let mut flow = LinearFlow::new(coeffs, C64::new(0.0, 0.0), Formula::General, false, true);
        let run = integrate_linear(|t, y, dy| flow.eval(t, y, dy), 0.0, identity_state(n, false), &targets, tol)?;
        for ((&i, state), ls) in idx.iter().zip(run.states).zip(run.log_scales) {
            let m = CMatrix::from_row_major(n, n, state).map_err(|_| FlowError::BlowUp { t: times[i] })?;
            out[i] = if ls == 0.0 { m } else { m.scale(C64::new(ls.exp(), 0.0)) };
        }
    }
    for (i, m) in out.iter().enumerate() {
        if !m.is_finite() {
            return Err(FlowError::BlowUp { t: times[i] });
        }
    }
    Ok(out)
}

/// `‖h F(t,z) F(s,z)⁻¹ h⁻¹ − F(t+τ,z) F(s+τ,z)⁻¹‖` (max entry), from four
/// independent integrations.
pub fn check_flow_symmetry(
    coeffs: &LinearCoefficients,
    z: C64,
    t: f64,
    s: f64,
    tol: f64,
) -> Result<f64, FlowError> {
    if !(t >= s && s >= 0.0) {
        return Err(FlowError::InvalidSpan(format!("need t >= s >= 0, got t = {t}, s = {s}")));
    }
    let tau = coeffs.delay();
    let transfer = |t1: f64, t0: f64| -> Result<CMatrix, FlowError> {
        let a = fundamental_solution(coeffs, z, t1, tol)?;
        let b = fundamental_solution(coeffs, z, t0, tol)?;
        let lu = lu_factor(&b.f)?;
        let prod = a.f.matmul(&lu.inverse()?);
        Ok(prod.scale(C64::new((a.log_scale - b.log_scale).exp(), 0.0)))
    };
    let lhs = coeffs.h().matmul(&transfer(t, s)?).matmul(coeffs.h_inv());
    let rhs = transfer(t + tau, s + tau)?;
    Ok(lhs.max_abs_diff(&rhs))
}
