//! Builtin problems with closed-form orbits.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::config::ConfigError;
use crate::control::{build_controlled, GainTemplate, OdeSystem};
use crate::model::{
    linearize, DdeProblem, DdeSystem, LinearCoefficients, OrbitWithSymmetry, PeriodicOrbit,
};
use crate::numkernel::{CMatrix, C64};

pub const BUILTIN_NAMES: [&str; 6] =
    ["trivial", "scalar_linear", "block_double", "stuart_landau", "antiphase_pair", "zn_ring"];

/// A known multiplier and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownMultiplier {
    pub value: C64,
    pub multiplicity: usize,
}

#[derive(Clone)]
pub struct BuiltinProblem {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub problem: DdeProblem,
    pub orbit: OrbitWithSymmetry,
    /// Closed-form multipliers, where available.
    pub known: Vec<KnownMultiplier>,
    /// Base ODE and gain structure for control scans.
    pub gain_template: Option<GainTemplate>,
}

impl std::fmt::Debug for BuiltinProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltinProblem").field("name", &self.name).field("params", &self.params).finish()
    }
}

impl BuiltinProblem {
    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn delay(&self) -> f64 {
        self.problem.delay
    }

    pub fn coefficients(&self, tol: f64) -> Result<LinearCoefficients, ConfigError> {
        Ok(linearize(&self.problem, &self.orbit, tol)?)
    }

    /// Same problem with the orbit's `h` and `Θ` replaced; no checks beyond
    /// those of [`OrbitWithSymmetry::new`].
    pub fn with_symmetry(mut self, h: Option<CMatrix>, theta: Option<f64>) -> Result<Self, ConfigError> {
        let h = h.unwrap_or_else(|| self.orbit.h.clone());
        let theta = theta.unwrap_or(self.orbit.theta);
        self.orbit = OrbitWithSymmetry::new(self.orbit.orbit.clone(), h, theta)?;
        if let Some(t) = &mut self.gain_template {
            t.orbit = self.orbit.clone();
        }
        Ok(self)
    }
}

struct LinearDde {
    a: CMatrix,
    b: CMatrix,
}

impl DdeSystem for LinearDde {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn rhs(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            out[i] = (0..n).map(|j| self.a[(i, j)].re * x[j] + self.b[(i, j)].re * y[j]).sum();
        }
    }

    fn d1(&self, _x: &[f64], _y: &[f64]) -> CMatrix {
        self.a.clone()
    }

    fn d2(&self, _x: &[f64], _y: &[f64]) -> CMatrix {
        self.b.clone()
    }
}

struct ConstantOrbit {
    dim: usize,
    period: f64,
}

impl PeriodicOrbit for ConstantOrbit {
    fn dim(&self) -> usize {
        self.dim
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn eval(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn derivative(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Cells `r (cos(ωt + φ_j), sin(ωt + φ_j))` followed by `extra` zero
/// components.
struct RotatingCells {
    radius: f64,
    omega: f64,
    phases: Vec<f64>,
    extra: usize,
}

impl PeriodicOrbit for RotatingCells {
    fn dim(&self) -> usize {
        2 * self.phases.len() + self.extra
    }

    fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        for (j, ph) in self.phases.iter().enumerate() {
            let (s, c) = (self.omega * t + ph).sin_cos();
            out[2 * j] = self.radius * c;
            out[2 * j + 1] = self.radius * s;
        }
    }

    fn derivative(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        for (j, ph) in self.phases.iter().enumerate() {
            let (s, c) = (self.omega * t + ph).sin_cos();
            out[2 * j] = -self.radius * self.omega * s;
            out[2 * j + 1] = self.radius * self.omega * c;
        }
    }
}

fn cell_rhs(lambda0: f64, omega: f64, x: f64, y: f64) -> (f64, f64) {
    let r2 = x * x + y * y;
    (lambda0 * x - omega * y - r2 * x, omega * x + lambda0 * y - r2 * y)
}

fn cell_jacobian(lambda0: f64, omega: f64, x: f64, y: f64) -> [f64; 4] {
    [
        lambda0 - 3.0 * x * x - y * y,
        -omega - 2.0 * x * y,
        omega - 2.0 * x * y,
        lambda0 - x * x - 3.0 * y * y,
    ]
}

/// Stuart–Landau oscillator `z' = (λ₀ + iω) z − |z|² z`, optionally with a
/// decoupled real mode `w' = α w`.
pub struct StuartLandau {
    pub lambda0: f64,
    pub omega: f64,
    pub transverse: Option<f64>,
}

impl OdeSystem for StuartLandau {
    fn dim(&self) -> usize {
        2 + usize::from(self.transverse.is_some())
    }

    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        let (a, b) = cell_rhs(self.lambda0, self.omega, x[0], x[1]);
        out[0] = a;
        out[1] = b;
        if let Some(alpha) = self.transverse {
            out[2] = alpha * x[2];
        }
    }

    fn jacobian(&self, x: &[f64]) -> CMatrix {
        let n = self.dim();
        let j = cell_jacobian(self.lambda0, self.omega, x[0], x[1]);
        let mut m = CMatrix::zeros(n, n);
        for r in 0..2 {
            for c in 0..2 {
                m[(r, c)] = C64::new(j[2 * r + c], 0.0);
            }
        }
        if let Some(alpha) = self.transverse {
            m[(2, 2)] = C64::new(alpha, 0.0);
        }
        m
    }
}

/// Ring of Stuart–Landau cells with delayed nearest-neighbour coupling
/// `c [z_{j+1}(t − τ) − z_j]`.
struct CellRing {
    cells: usize,
    lambda0: f64,
    omega: f64,
    coupling: C64,
}

impl CellRing {
    fn coupling_block(&self) -> [f64; 4] {
        let c = self.coupling;
        [c.re, -c.im, c.im, c.re]
    }
}

impl DdeSystem for CellRing {
    fn dim(&self) -> usize {
        2 * self.cells
    }

    fn rhs(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.cells;
        let k = self.coupling_block();
        for j in 0..n {
            let nb = (j + 1) % n;
            let (a, b) = cell_rhs(self.lambda0, self.omega, x[2 * j], x[2 * j + 1]);
            let dx = y[2 * nb] - x[2 * j];
            let dy = y[2 * nb + 1] - x[2 * j + 1];
            out[2 * j] = a + k[0] * dx + k[1] * dy;
            out[2 * j + 1] = b + k[2] * dx + k[3] * dy;
        }
    }

    fn d1(&self, x: &[f64], _y: &[f64]) -> CMatrix {
        let n = self.cells;
        let k = self.coupling_block();
        let mut m = CMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            let jac = cell_jacobian(self.lambda0, self.omega, x[2 * j], x[2 * j + 1]);
            for r in 0..2 {
                for c in 0..2 {
                    m[(2 * j + r, 2 * j + c)] = C64::new(jac[2 * r + c] - k[2 * r + c], 0.0);
                }
            }
        }
        m
    }

    fn d2(&self, _x: &[f64], _y: &[f64]) -> CMatrix {
        let n = self.cells;
        let k = self.coupling_block();
        let mut m = CMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            let nb = (j + 1) % n;
            for r in 0..2 {
                for c in 0..2 {
                    m[(2 * j + r, 2 * nb + c)] = C64::new(k[2 * r + c], 0.0);
                }
            }
        }
        m
    }
}

pub fn rotation(phi: f64) -> CMatrix {
    let (s, c) = phi.sin_cos();
    CMatrix::from_real(2, 2, &[c, -s, s, c]).expect("finite")
}

/// `(h x)_j = x_{j+1}` on `cells` blocks of size 2.
pub fn cyclic_shift(cells: usize) -> CMatrix {
    let mut h = CMatrix::zeros(2 * cells, 2 * cells);
    for j in 0..cells {
        let nb = (j + 1) % cells;
        h[(2 * j, 2 * nb)] = C64::new(1.0, 0.0);
        h[(2 * j + 1, 2 * nb + 1)] = C64::new(1.0, 0.0);
    }
    h
}

struct Params<'a> {
    name: &'a str,
    given: &'a BTreeMap<String, f64>,
    used: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn get(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        self.used.push(key);
        let v = self.given.get(key).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(ConfigError::BadParam { builtin: self.name.into(), param: key.into(), value: v });
        }
        Ok(v)
    }

    fn opt(&mut self, key: &'static str) -> Option<f64> {
        self.used.push(key);
        self.given.get(key).copied()
    }

    fn count(&mut self, key: &'static str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let v = self.get(key, default as f64)?;
        if v.fract() != 0.0 || v < min as f64 || v > 1024.0 {
            return Err(ConfigError::BadParam { builtin: self.name.into(), param: key.into(), value: v });
        }
        Ok(v as usize)
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        let v = self.get(key, default)?;
        if v <= 0.0 {
            return Err(ConfigError::BadParam { builtin: self.name.into(), param: key.into(), value: v });
        }
        Ok(v)
    }

    fn finish(&self) -> Result<BTreeMap<String, f64>, ConfigError> {
        if let Some(k) = self.given.keys().find(|k| !self.used.contains(&k.as_str())) {
            return Err(ConfigError::UnknownParam { builtin: self.name.into(), param: k.clone() });
        }
        Ok(self.given.clone())
    }
}

fn linear(
    name: &str,
    params: BTreeMap<String, f64>,
    a: CMatrix,
    b: CMatrix,
    tau: f64,
    known: Vec<KnownMultiplier>,
) -> Result<BuiltinProblem, ConfigError> {
    let n = a.rows();
    let problem = DdeProblem::new(Arc::new(LinearDde { a, b }), tau)?;
    let orbit = OrbitWithSymmetry::new(Arc::new(ConstantOrbit { dim: n, period: tau }), CMatrix::identity(n), 1.0)?;
    Ok(BuiltinProblem { name: name.into(), params, problem, orbit, known, gain_template: None })
}

fn one(value: C64, multiplicity: usize) -> KnownMultiplier {
    KnownMultiplier { value, multiplicity }
}

/// Constructs a builtin by name; unknown parameters are rejected.
pub fn builtin(name: &str, given: &BTreeMap<String, f64>) -> Result<BuiltinProblem, ConfigError> {
    let mut p = Params { name, given, used: Vec::new() };
    let unit = C64::new(1.0, 0.0);
    match name {
        "trivial" => {
            let n = p.count("n", 1, 1)?;
            let tau = p.positive("tau", 1.0)?;
            let params = p.finish()?;
            linear(name, params, CMatrix::zeros(n, n), CMatrix::zeros(n, n), tau, vec![one(unit, n)])
        }
        "scalar_linear" | "block_double" => {
            let (da, db, dtau) = if name == "scalar_linear" { (0.0, -1.0, 1.0) } else { (1.0, 0.0, 2f64.ln()) };
            let a = p.get("a", da)?;
            let b = p.get("b", db)?;
            let tau = p.positive("tau", dtau)?;
            let params = p.finish()?;
            let n = if name == "scalar_linear" { 1 } else { 2 };
            let known = if b == 0.0 { vec![one(C64::new((a * tau).exp(), 0.0), n)] } else { vec![] };
            let am = CMatrix::diagonal(&vec![C64::new(a, 0.0); n]);
            let bm = CMatrix::diagonal(&vec![C64::new(b, 0.0); n]);
            linear(name, params, am, bm, tau, known)
        }
        "stuart_landau" => {
            let lambda0 = p.positive("lambda0", 0.1)?;
            let omega = p.positive("omega", 1.0)?;
            let phi = p.positive("phi", PI)?;
            let gain = p.get("k", 0.0)?;
            let transverse = p.opt("alpha");
            if let Some(a) = transverse {
                if !a.is_finite() {
                    return Err(ConfigError::BadParam { builtin: name.into(), param: "alpha".into(), value: a });
                }
            }
            let params = p.finish()?;
            if phi > 2.0 * PI {
                return Err(ConfigError::BadParam { builtin: name.into(), param: "phi".into(), value: phi });
            }
            let n = 2 + usize::from(transverse.is_some());
            let mut h = CMatrix::zeros(n, n);
            h.set_block(0, 0, &rotation(phi));
            if transverse.is_some() {
                h[(2, 2)] = C64::new(-1.0, 0.0);
            }
            let orbit_fn = RotatingCells { radius: lambda0.sqrt(), omega, phases: vec![0.0], extra: n - 2 };
            let orbit = OrbitWithSymmetry::new(Arc::new(orbit_fn), h, phi / (2.0 * PI))?;
            let base: Arc<dyn OdeSystem> = Arc::new(StuartLandau { lambda0, omega, transverse });
            let structure = CMatrix::identity(n).scale(C64::new(-1.0, 0.0));
            let controlled = build_controlled(base.clone(), &structure.scale(C64::new(gain, 0.0)), &orbit)?;
            let tau = orbit.shift();
            let mut known = Vec::new();
            if gain == 0.0 {
                known.push(one(unit, 1));
                known.push(one(C64::new((-2.0 * lambda0 * tau).exp(), 0.0), 1));
                if let Some(a) = transverse {
                    known.push(one(C64::new(-(a * tau).exp(), 0.0), 1));
                }
            }
            Ok(BuiltinProblem {
                name: name.into(),
                params,
                problem: controlled.problem,
                orbit: orbit.clone(),
                known,
                gain_template: Some(GainTemplate { base, structure, orbit }),
            })
        }
        "antiphase_pair" | "zn_ring" => {
            let ring = name == "zn_ring";
            let cells = if ring { p.count("n", 3, 2)? } else { 2 };
            let lambda0 = p.positive("lambda0", 1.0)?;
            let omega = p.positive("omega", 1.0)?;
            let c_re = p.get(if ring { "c_re" } else { "c" }, if ring { 0.2 } else { 0.3 })?;
            let c_im = if ring { p.get("c_im", 0.1)? } else { 0.0 };
            let params = p.finish()?;
            let phases = (0..cells).map(|j| 2.0 * PI * j as f64 / cells as f64).collect();
            let orbit_fn = RotatingCells { radius: lambda0.sqrt(), omega, phases, extra: 0 };
            let orbit = OrbitWithSymmetry::new(Arc::new(orbit_fn), cyclic_shift(cells), 1.0 / cells as f64)?;
            let system = CellRing { cells, lambda0, omega, coupling: C64::new(c_re, c_im) };
            let problem = DdeProblem::new(Arc::new(system), orbit.shift())?;
            Ok(BuiltinProblem {
                name: name.into(),
                params,
                problem,
                orbit,
                known: vec![one(unit, 1)],
                gain_template: None,
            })
        }
        _ => Err(ConfigError::UnknownBuiltin(name.into())),
    }
}

/// Builtin with default parameters.
pub fn default_builtin(name: &str) -> Result<BuiltinProblem, ConfigError> {
    builtin(name, &BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_hypotheses;

    #[test]
    fn all_builtins_validate() {
        for name in BUILTIN_NAMES {
            let b = default_builtin(name).unwrap();
            let report = validate_hypotheses(&b.problem, &b.orbit, 1e-8);
            assert!(report.passed(), "{name}: {:?}", report.failures().collect::<Vec<_>>());
            b.coefficients(1e-8).unwrap();
        }
    }

    #[test]
    fn unknown_param_rejected() {
        let mut m = BTreeMap::new();
        m.insert("zeta".to_string(), 1.0);
        assert!(matches!(builtin("scalar_linear", &m), Err(ConfigError::UnknownParam { .. })));
        assert!(matches!(default_builtin("nope"), Err(ConfigError::UnknownBuiltin(_))));
    }

    #[test]
    fn stuart_landau_trace() {
        // tr A = 2λ₀ − 4λ₀ on the orbit.
        let b = default_builtin("stuart_landau").unwrap();
        let a = b.coefficients(1e-8).unwrap().a(0.7);
        assert!((a.trace().re + 0.2).abs() < 1e-12);
    }

    #[test]
    fn controlled_delay_term_is_rotation() {
        let mut m = BTreeMap::new();
        m.insert("k".to_string(), 0.5);
        m.insert("phi".to_string(), 1.0);
        let b = builtin("stuart_landau", &m).unwrap();
        let bm = b.coefficients(1e-8).unwrap().b(0.3);
        // K = −0.5 I, so B = −K h = 0.5 R(φ).
        assert!(bm.max_abs_diff(&rotation(1.0).scale(C64::new(0.5, 0.0))) < 1e-15);
    }
}
