//! The characteristic matrix `Δ(z) = I − z h⁻¹ F(τ, z)` and the
//! logarithmic derivative of its determinant.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::flow::{fundamental_solution_with, FlowError, FlowResult, Formula, DEFAULT_FLOW_TOL};
use crate::model::{LinearCoefficients, SHIFT_DELAY_RTOL};
use crate::numkernel::{lu_factor, CMatrix, NumError, C64};

pub const DEFAULT_CACHE_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CharMatError {
    #[error("shift {shift} does not equal the delay {delay}")]
    ShiftMismatch { shift: f64, delay: f64 },
    #[error("the monodromy formula requires h = I")]
    NotIdentity,
    #[error("Δ(z) is numerically singular at z = {z}")]
    SingularOnContour { z: C64 },
    #[error("flow failed at z = {z}: {source}")]
    Flow { z: C64, source: FlowError },
    #[error(transparent)]
    Num(#[from] NumError),
}

struct FlowCache {
    capacity: usize,
    clock: u64,
    entries: HashMap<(u64, u64), (Arc<FlowResult>, u64)>,
}

impl FlowCache {
    fn get(&mut self, key: (u64, u64)) -> Option<Arc<FlowResult>> {
        self.clock += 1;
        let clock = self.clock;
        self.entries.get_mut(&key).map(|(v, stamp)| {
            *stamp = clock;
            v.clone()
        })
    }

    fn insert(&mut self, key: (u64, u64), value: Arc<FlowResult>) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() >= self.capacity && !self.entries.contains_key(&key) {
            if let Some(oldest) = self.entries.iter().min_by_key(|(_, (_, s))| *s).map(|(k, _)| *k) {
                self.entries.remove(&oldest);
            }
        }
        self.clock += 1;
        self.entries.insert(key, (value, self.clock));
    }
}

/// Evaluates `Δ(z)`, `det Δ(z)` and `tr(Δ⁻¹ Δ')`, caching flows by `z`.
pub struct CharMatrixEvaluator {
    coeffs: LinearCoefficients,
    tol: f64,
    formula: Formula,
    cache: Mutex<FlowCache>,
    integrations: AtomicUsize,
}

impl std::fmt::Debug for CharMatrixEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CharMatrixEvaluator")
            .field("coeffs", &self.coeffs)
            .field("tol", &self.tol)
            .field("formula", &self.formula)
            .finish()
    }
}

impl CharMatrixEvaluator {
    /// `shift` is the orbit shift `Θp`; it must equal the delay.
    pub fn new(coeffs: LinearCoefficients, shift: f64, tol: f64) -> Result<Self, CharMatError> {
        let delay = coeffs.delay();
        if !((shift - delay).abs() <= SHIFT_DELAY_RTOL * delay.abs().max(1.0)) {
            return Err(CharMatError::ShiftMismatch { shift, delay });
        }
        Ok(Self::build(coeffs, tol, Formula::General))
    }

    /// Uses `F' = [A + zB] F` directly; requires `h = I`.
    pub fn monodromy(coeffs: LinearCoefficients, tol: f64) -> Result<Self, CharMatError> {
        let n = coeffs.dim();
        if coeffs.h().max_abs_diff(&CMatrix::identity(n)) != 0.0 {
            return Err(CharMatError::NotIdentity);
        }
        Ok(Self::build(coeffs, tol, Formula::Monodromy))
    }

    fn build(coeffs: LinearCoefficients, tol: f64, formula: Formula) -> Self {
        let tol = if tol > 0.0 && tol.is_finite() { tol } else { DEFAULT_FLOW_TOL };
        Self {
            coeffs,
            tol,
            formula,
            cache: Mutex::new(FlowCache { capacity: DEFAULT_CACHE_CAPACITY, clock: 0, entries: HashMap::new() }),
            integrations: AtomicUsize::new(0),
        }
    }

    pub fn with_cache_capacity(self, capacity: usize) -> Self {
        self.cache.lock().unwrap().capacity = capacity;
        self
    }

    pub fn coefficients(&self) -> &LinearCoefficients {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn formula(&self) -> Formula {
        self.formula
    }

    /// Number of flow integrations performed (cache misses).
    pub fn integrations(&self) -> usize {
        self.integrations.load(Ordering::Relaxed)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap().entries.len()
    }

    /// `F(τ, z)` and `∂F/∂z(τ, z)`, scaled.
    pub fn flow(&self, z: C64) -> Result<Arc<FlowResult>, CharMatError> {
        let key = (z.re.to_bits(), z.im.to_bits());
        if let Some(hit) = self.cache.lock().unwrap().get(key) {
            return Ok(hit);
        }
        let result = fundamental_solution_with(&self.coeffs, z, self.coeffs.delay(), self.tol, self.formula)
            .map_err(|source| CharMatError::Flow { z, source })?;
        self.integrations.fetch_add(1, Ordering::Relaxed);
        let result = Arc::new(result);
        self.cache.lock().unwrap().insert(key, result.clone());
        Ok(result)
    }

    fn apply_h_inv(&self, m: &CMatrix) -> CMatrix {
        match self.formula {
            Formula::General => self.coeffs.h_inv().matmul(m),
            Formula::Monodromy => m.clone(),
        }
    }

    /// Scaled `Δ`: `e^{-s} I − z h⁻¹ f` where `F = e^{s} f`.
    fn scaled_delta(&self, z: C64, flow: &FlowResult) -> (CMatrix, CMatrix) {
        let n = self.dim();
        let hf = self.apply_h_inv(&flow.f);
        let diag = C64::new((-flow.log_scale).exp(), 0.0);
        let mut d = hf.scale(-z);
        for i in 0..n {
            d[(i, i)] += diag;
        }
        (d, hf)
    }

    /// `Δ(z)`; exactly `I` at `z = 0`.
    pub fn delta(&self, z: C64) -> Result<CMatrix, CharMatError> {
        let n = self.dim();
        if z == C64::new(0.0, 0.0) {
            return Ok(CMatrix::identity(n));
        }
        let flow = self.flow(z)?;
        let hf = self.apply_h_inv(&flow.fundamental());
        let mut d = hf.scale(-z);
        for i in 0..n {
            d[(i, i)] += C64::new(1.0, 0.0);
        }
        Ok(d)
    }

    /// `det Δ(z)`; may overflow when the flow is huge, see
    /// [`det_delta_scaled`](Self::det_delta_scaled).
    pub fn det_delta(&self, z: C64) -> Result<C64, CharMatError> {
        let (d, log) = self.det_delta_scaled(z)?;
        Ok(if log == 0.0 { d } else { d * log.exp() })
    }

    /// `(d, e)` with `det Δ(z) = d · exp(e)`.
    pub fn det_delta_scaled(&self, z: C64) -> Result<(C64, f64), CharMatError> {
        if z == C64::new(0.0, 0.0) {
            return Ok((C64::new(1.0, 0.0), 0.0));
        }
        let flow = self.flow(z)?;
        let (d, _) = self.scaled_delta(z, &flow);
        Ok((lu_factor(&d)?.determinant(), self.dim() as f64 * flow.log_scale))
    }

    /// `|det Δ(z)|` divided by `Π_i (1 + |z| ‖row_i(h⁻¹F)‖)`, a Hadamard-type
    /// bound; lies in `[0, 1]` and vanishes exactly at characteristic roots.
    pub fn normalized_det(&self, z: C64) -> Result<f64, CharMatError> {
        if z == C64::new(0.0, 0.0) {
            return Ok(1.0);
        }
        let flow = self.flow(z)?;
        let (d, hf) = self.scaled_delta(z, &flow);
        let det = lu_factor(&d)?.determinant().norm();
        let n = self.dim();
        let diag = (-flow.log_scale).exp();
        let mut bound = 1.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| hf[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            bound *= diag + z.norm() * row;
        }
        Ok(det / bound)
    }

    /// `d/dz log det Δ(z) = tr(Δ⁻¹ Δ')`.
    pub fn log_derivative(&self, z: C64) -> Result<C64, CharMatError> {
        let flow = self.flow(z)?;
        let (d, hf) = self.scaled_delta(z, &flow);
        let hg = self.apply_h_inv(&flow.dfdz);
        let dd = hf.add(&hg.scale(z)).scale(C64::new(-1.0, 0.0));
        let lu = lu_factor(&d)?;
        if lu.is_singular() {
            return Err(CharMatError::SingularOnContour { z });
        }
        let x = lu.solve_matrix(&dd)?;
        let tr = x.trace();
        if !tr.is_finite() {
            return Err(CharMatError::SingularOnContour { z });
        }
        Ok(tr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstantCoefficients;

    fn scalar(a: f64, b: f64, tau: f64) -> LinearCoefficients {
        let funcs = ConstantCoefficients {
            a: CMatrix::from_real(1, 1, &[a]).unwrap(),
            b: CMatrix::from_real(1, 1, &[b]).unwrap(),
        };
        LinearCoefficients::new_unchecked(Arc::new(funcs), CMatrix::identity(1), tau).unwrap()
    }

    #[test]
    fn scalar_delta_closed_form() {
        let ev = CharMatrixEvaluator::new(scalar(0.3, -0.7, 1.2), 1.2, 1e-12).unwrap();
        let z = C64::new(0.4, 0.2);
        let d = ev.delta(z).unwrap()[(0, 0)];
        let expect = C64::new(1.0, 0.0) - z * ((C64::new(0.3, 0.0) + z * -0.7) * 1.2).exp();
        assert!((d - expect).norm() < 1e-10);
    }

    #[test]
    fn delta_is_identity_at_origin() {
        let ev = CharMatrixEvaluator::new(scalar(1.0, 2.0, 1.0), 1.0, 1e-10).unwrap();
        assert_eq!(ev.delta(C64::new(0.0, 0.0)).unwrap(), CMatrix::identity(1));
        assert_eq!(ev.integrations(), 0);
    }

    #[test]
    fn shift_mismatch_rejected() {
        let err = CharMatrixEvaluator::new(scalar(0.0, 0.0, 1.0), 1.1, 1e-10).unwrap_err();
        assert!(matches!(err, CharMatError::ShiftMismatch { .. }));
    }

    #[test]
    fn log_derivative_matches_difference_quotient() {
        let ev = CharMatrixEvaluator::new(scalar(0.1, -0.5, 1.0), 1.0, 1e-13).unwrap();
        let z = C64::new(0.7, -0.3);
        let h = 1e-5;
        let num = (ev.det_delta(z + h).unwrap() - ev.det_delta(z - h).unwrap()) / (2.0 * h);
        let expect = num / ev.det_delta(z).unwrap();
        assert!((ev.log_derivative(z).unwrap() - expect).norm() < 1e-6);
    }

    #[test]
    fn cache_returns_identical_results() {
        let ev = CharMatrixEvaluator::new(scalar(0.1, -0.5, 1.0), 1.0, 1e-10).unwrap();
        let z = C64::new(0.2, 0.9);
        let a = ev.log_derivative(z).unwrap();
        let b = ev.log_derivative(z).unwrap();
        assert_eq!(a.re.to_bits(), b.re.to_bits());
        assert_eq!(a.im.to_bits(), b.im.to_bits());
        assert_eq!(ev.integrations(), 1);
    }

    #[test]
    fn singular_at_root() {
        // x' = 0 with h = I: Δ(z) = 1 − z.
        let ev = CharMatrixEvaluator::new(scalar(0.0, 0.0, 1.0), 1.0, 1e-10).unwrap();
        assert!(matches!(ev.log_derivative(C64::new(1.0, 0.0)), Err(CharMatError::SingularOnContour { .. })));
    }
}
