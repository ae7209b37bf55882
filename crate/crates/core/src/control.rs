//! Equivariant delayed-feedback control `F(x) + K[x − h x(t − τ)]` and
//! gain scans over `K = k K₀`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charmat::CharMatrixEvaluator;
use crate::model::{linearize, real_matvec, DdeProblem, DdeSystem, ModelError, OrbitWithSymmetry};
use crate::numkernel::{CMatrix, C64};
use crate::roots::{classify, find_all, Classification, RootSettings, SearchRegion, StabilityVerdict, DEFAULT_UNIT_TOL};

pub const COMMUTATION_TOL: f64 = 1e-12;
pub const FEEDBACK_TOL: f64 = 1e-8;
/// Environment variable capping the scan's worker threads.
pub const THREADS_ENV: &str = "DWSTAB_THREADS";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ControlError {
    #[error("gain does not commute with h (residual {0:.3e})")]
    NotCommuting(f64),
    #[error("feedback does not vanish on the orbit (residual {residual:.3e} at t = {at})")]
    FeedbackOnOrbit { residual: f64, at: f64 },
    #[error("gain must be a real {expected}×{expected} matrix")]
    BadGain { expected: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Autonomous ODE `x' = F(x)` with Jacobian.
pub trait OdeSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64]) -> CMatrix;
}

struct Controlled {
    base: Arc<dyn OdeSystem>,
    gain: CMatrix,
    gain_h: CMatrix,
    h: CMatrix,
}

impl DdeSystem for Controlled {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn rhs(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.base.rhs(x, out);
        let hy = real_matvec(&self.h, y);
        let diff: Vec<f64> = x.iter().zip(&hy).map(|(a, b)| a - b).collect();
        for (o, v) in out.iter_mut().zip(real_matvec(&self.gain, &diff)) {
            *o += v;
        }
    }

    fn d1(&self, x: &[f64], _y: &[f64]) -> CMatrix {
        self.base.jacobian(x).add(&self.gain)
    }

    fn d2(&self, _x: &[f64], _y: &[f64]) -> CMatrix {
        self.gain_h.scale(C64::new(-1.0, 0.0))
    }
}

#[derive(Clone)]
pub struct ControlledProblem {
    pub gain: CMatrix,
    pub orbit: OrbitWithSymmetry,
    pub problem: DdeProblem,
}

/// Builds `f(x, y) = F(x) + K[x − h y]` with delay `Θp`.
pub fn build_controlled(
    base: Arc<dyn OdeSystem>,
    gain: &CMatrix,
    orbit: &OrbitWithSymmetry,
) -> Result<ControlledProblem, ControlError> {
    let n = base.dim();
    if gain.rows() != n || gain.cols() != n || !gain.is_real() {
        return Err(ControlError::BadGain { expected: n });
    }
    let h = &orbit.h;
    let comm = h.matmul(gain).max_abs_diff(&gain.matmul(h));
    if comm > COMMUTATION_TOL {
        return Err(ControlError::NotCommuting(comm));
    }
    let tau = orbit.shift();
    let p = orbit.period();
    let samples = crate::model::DEFAULT_VALIDATION_SAMPLES;
    let (mut worst, mut at) = (0.0f64, 0.0);
    for i in 0..samples {
        let t = p * i as f64 / samples as f64;
        let x = orbit.eval(t);
        let hy = real_matvec(h, &orbit.eval(t - tau));
        let diff: Vec<f64> = x.iter().zip(&hy).map(|(a, b)| a - b).collect();
        let r = real_matvec(gain, &diff).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r > worst {
            worst = r;
            at = t;
        }
    }
    if worst > FEEDBACK_TOL {
        return Err(ControlError::FeedbackOnOrbit { residual: worst, at });
    }
    let system = Controlled { base, gain: gain.clone(), gain_h: gain.matmul(h), h: h.clone() };
    let problem = DdeProblem::new(Arc::new(system), tau)?;
    Ok(ControlledProblem { gain: gain.clone(), orbit: orbit.clone(), problem })
}

/// Base system, orbit and gain structure `K₀` of a scan.
#[derive(Clone)]
pub struct GainTemplate {
    pub base: Arc<dyn OdeSystem>,
    pub structure: CMatrix,
    pub orbit: OrbitWithSymmetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for GainGrid {
    fn default() -> Self {
        Self { start: 0.0, stop: 2.0, points: 101 }
    }
}

impl GainGrid {
    pub fn values(&self) -> Result<Vec<f64>, ControlError> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(ControlError::InvalidGrid(format!("{self:?}")));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| if i + 1 == self.points { self.stop } else { self.start + step * i as f64 })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings {
    pub flow_tol: f64,
    pub mu_min: f64,
    pub validation_tol: f64,
    pub tol_unit: f64,
    pub roots: RootSettings,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            flow_tol: 1e-10,
            mu_min: 0.5,
            validation_tol: 1e-8,
            tol_unit: DEFAULT_UNIT_TOL,
            roots: RootSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub gain: f64,
    pub verdict: Option<StabilityVerdict>,
    pub max_nontrivial_modulus: Option<f64>,
    /// `|det Δ(1)|`.
    pub trivial_residual: Option<f64>,
    pub error: Option<String>,
}

impl ScanPoint {
    pub fn classification(&self) -> Option<Classification> {
        self.verdict.as_ref().map(|v| v.classification)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainScanResult {
    pub grid: GainGrid,
    pub points: Vec<ScanPoint>,
    /// Maximal runs of consecutive stable grid points, as `(first, last)`.
    pub stable_intervals: Vec<(f64, f64)>,
}

/// Maximal runs of stable points.
pub fn stable_intervals(points: &[ScanPoint]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut run: Option<(f64, f64)> = None;
    for p in points {
        if p.classification() == Some(Classification::Stable) {
            run = Some(match run {
                Some((a, _)) => (a, p.gain),
                None => (p.gain, p.gain),
            });
        } else if let Some(r) = run.take() {
            out.push(r);
        }
    }
    out.extend(run);
    out
}

/// Full analysis at a single gain.
pub fn analyze_gain(template: &GainTemplate, gain: f64, settings: &ScanSettings) -> ScanPoint {
    let run = || -> crate::Result<(StabilityVerdict, Option<f64>, f64)> {
        let k = template.structure.scale(C64::new(gain, 0.0));
        let controlled = build_controlled(template.base.clone(), &k, &template.orbit)?;
        let coeffs = linearize(&controlled.problem, &template.orbit, settings.validation_tol)?;
        let eval = CharMatrixEvaluator::new(coeffs, template.orbit.shift(), settings.flow_tol)?;
        let trivial = eval.det_delta(C64::new(1.0, 0.0))?.norm();
        let region = SearchRegion::from_min_multiplier(settings.mu_min)?;
        let set = find_all(&eval, &region, &settings.roots)?;
        Ok((classify(&set, settings.tol_unit), set.max_nontrivial_modulus(), trivial))
    };
    match run() {
        Ok((verdict, max_mod, trivial)) => ScanPoint {
            gain,
            verdict: Some(verdict),
            max_nontrivial_modulus: max_mod,
            trivial_residual: Some(trivial),
            error: None,
        },
        Err(e) => ScanPoint {
            gain,
            verdict: None,
            max_nontrivial_modulus: None,
            trivial_residual: None,
            error: Some(e.to_string()),
        },
    }
}

fn thread_cap() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .map_or(available, |n| n.min(available))
}

/// Scans `k K₀` over the grid; points are independent and returned in grid
/// order, failures are recorded per point.
pub fn scan_gain(
    template: &GainTemplate,
    grid: &GainGrid,
    settings: &ScanSettings,
) -> Result<GainScanResult, ControlError> {
    let n = template.base.dim();
    let k0 = &template.structure;
    if k0.rows() != n || k0.cols() != n || !k0.is_real() {
        return Err(ControlError::BadGain { expected: n });
    }
    let comm = template.orbit.h.matmul(k0).max_abs_diff(&k0.matmul(&template.orbit.h));
    if comm > COMMUTATION_TOL {
        return Err(ControlError::NotCommuting(comm));
    }
    let gains = grid.values()?;
    let threads = thread_cap();
    let points: Vec<ScanPoint> = if threads <= 1 {
        gains.iter().map(|&g| analyze_gain(template, g, settings)).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| gains.par_iter().map(|&g| analyze_gain(template, g, settings)).collect()),
            Err(_) => gains.iter().map(|&g| analyze_gain(template, g, settings)).collect(),
        }
    };
    let stable_intervals = stable_intervals(&points);
    Ok(GainScanResult { grid: *grid, points, stable_intervals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(gain: f64, c: Classification) -> ScanPoint {
        ScanPoint {
            gain,
            verdict: Some(StabilityVerdict {
                classification: c,
                witness: None,
                trivial_simple: true,
                margin: 0.0,
                warnings: vec![],
            }),
            max_nontrivial_modulus: None,
            trivial_residual: None,
            error: None,
        }
    }

    #[test]
    fn intervals_from_runs() {
        use Classification::*;
        let pts: Vec<_> = [Unstable, Stable, Stable, Inconclusive, Stable]
            .iter()
            .enumerate()
            .map(|(i, &c)| point(i as f64, c))
            .collect();
        assert_eq!(stable_intervals(&pts), vec![(1.0, 2.0), (4.0, 4.0)]);
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = GainGrid { start: 0.0, stop: 2.0, points: 101 }.values().unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], 2.0);
        assert!((g[50] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(GainGrid { start: 0.0, stop: 1.0, points: 0 }.values().is_err());
    }
}
