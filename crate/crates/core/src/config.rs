//! TOML problem configuration.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{builtin, BuiltinProblem};
use crate::control::{ControlError, GainGrid};
use crate::model::{
    fourier_orbit, validate_coefficients, validate_hypotheses, FourierCoefficients, LinearCoefficients, ModelError,
    OrbitWithSymmetry, ValidationReport,
};
use crate::numkernel::CMatrix;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown builtin problem `{0}`")]
    UnknownBuiltin(String),
    #[error("builtin `{builtin}` has no parameter `{param}`")]
    UnknownParam { builtin: String, param: String },
    #[error("builtin `{builtin}`: invalid value {value} for `{param}`")]
    BadParam { builtin: String, param: String, value: f64 },
    #[error("hypothesis validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: u32,
    pub problem: ProblemSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<SymmetryConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitProblem>,
}

/// Coefficients given as Fourier tables together with the orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitProblem {
    pub dimension: usize,
    pub delay: f64,
    pub period: f64,
    /// Orbit modes `k = 0, 1, ...`; vectors of length `dimension`.
    pub orbit: Vec<FourierMode>,
    /// Modes of `A(t)`, row-major `dimension²` entries each.
    pub a_modes: Vec<FourierMode>,
    pub b_modes: Vec<FourierMode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    /// Row-major real matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub flow_tol: f64,
    pub mu_min: f64,
    pub mesh: usize,
    pub mu_floor: f64,
    pub match_tol: f64,
    pub validation_tol: f64,
    pub tol_unit: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            flow_tol: 1e-10,
            mu_min: 0.01,
            mesh: 200,
            mu_floor: 0.05,
            match_tol: 1e-4,
            validation_tol: 1e-8,
            tol_unit: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default)]
    pub start: f64,
    #[serde(default = "default_scan_stop")]
    pub stop: f64,
    #[serde(default = "default_scan_points")]
    pub points: usize,
    /// Row-major `K₀`; defaults to the builtin's structure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_structure: Option<Vec<f64>>,
    #[serde(default = "default_scan_mu_min")]
    pub mu_min: f64,
}

fn default_scan_stop() -> f64 {
    2.0
}

fn default_scan_points() -> usize {
    101
}

fn default_scan_mu_min() -> f64 {
    0.5
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: default_scan_stop(),
            points: default_scan_points(),
            gain_structure: None,
            mu_min: default_scan_mu_min(),
        }
    }
}

impl ScanConfig {
    pub fn grid(&self) -> GainGrid {
        GainGrid { start: self.start, stop: self.stop, points: self.points }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// Parses and schema-checks a TOML config; no numerics are run.
pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let cfg: ProblemConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

/// Parses `"name key=value ..."`.
pub fn parse_builtin_spec(spec: &str) -> Result<(String, BTreeMap<String, f64>), ConfigError> {
    let mut parts = spec.split_whitespace();
    let name = parts.next().ok_or_else(|| ConfigError::Parse("empty builtin spec".into()))?;
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(ConfigError::Parse(format!("invalid builtin name `{name}`")));
    }
    let mut params = BTreeMap::new();
    for tok in parts {
        let (k, v) = tok.split_once('=').ok_or_else(|| ConfigError::Parse(format!("expected key=value, got `{tok}`")))?;
        if k.is_empty() {
            return Err(ConfigError::Parse(format!("missing key in `{tok}`")));
        }
        let value: f64 = v.parse().map_err(|_| ConfigError::Parse(format!("invalid number in `{tok}`")))?;
        if !value.is_finite() {
            return Err(ConfigError::Parse(format!("non-finite value in `{tok}`")));
        }
        if params.insert(k.to_string(), value).is_some() {
            return Err(ConfigError::Parse(format!("duplicate key `{k}`")));
        }
    }
    Ok((name.to_string(), params))
}

impl ProblemConfig {
    /// Minimal config for a builtin spec string.
    pub fn from_builtin_spec(spec: &str) -> Result<Self, ConfigError> {
        let (name, params) = parse_builtin_spec(spec)?;
        let cfg = ProblemConfig {
            schema_version: SCHEMA_VERSION,
            problem: ProblemSource { builtin: Some(name), params, explicit: None },
            symmetry: None,
            solver: SolverConfig::default(),
            scan: None,
            output: OutputConfig::default(),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        match (&self.problem.builtin, &self.problem.explicit) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("give either builtin or explicit, not both".into())),
            (None, None) => return Err(ConfigError::Invalid("problem needs builtin or explicit".into())),
            (None, Some(_)) if !self.problem.params.is_empty() => {
                return Err(ConfigError::Invalid("params apply only to builtins".into()))
            }
            (None, Some(_)) => {
                let sym = self.symmetry.as_ref();
                if sym.and_then(|s| s.h.as_ref()).is_none() || sym.and_then(|s| s.theta).is_none() {
                    return Err(ConfigError::Invalid("explicit problems need symmetry.h and symmetry.theta".into()));
                }
            }
            _ => {}
        }
        let s = &self.solver;
        let positive = [
            ("flow_tol", s.flow_tol),
            ("mu_min", s.mu_min),
            ("mu_floor", s.mu_floor),
            ("match_tol", s.match_tol),
            ("validation_tol", s.validation_tol),
            ("tol_unit", s.tol_unit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if s.mu_min >= 1.0 {
            return Err(ConfigError::Invalid(format!("solver.mu_min must be below 1, got {}", s.mu_min)));
        }
        if s.mesh < crate::oracle::MIN_MESH {
            return Err(ConfigError::Invalid(format!("solver.mesh must be at least {}", crate::oracle::MIN_MESH)));
        }
        if let Some(scan) = &self.scan {
            if scan.points == 0 || !scan.start.is_finite() || !scan.stop.is_finite() {
                return Err(ConfigError::Invalid("scan grid must be finite with at least one point".into()));
            }
            if !(scan.mu_min > 0.0 && scan.mu_min < 1.0) {
                return Err(ConfigError::Invalid("scan.mu_min must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    /// Builds coefficients and orbit and runs hypothesis validation.
    pub fn resolve(&self) -> Result<ResolvedProblem, ConfigError> {
        self.check()?;
        let tol = self.solver.validation_tol;
        if let Some(name) = &self.problem.builtin {
            let mut b = builtin(name, &self.problem.params)?;
            if let Some(sym) = &self.symmetry {
                let n = b.dim();
                let h = sym.h.as_ref().map(|v| square(v, n, "symmetry.h")).transpose()?;
                b = b.with_symmetry(h, sym.theta)?;
            }
            let validation = validate_hypotheses(&b.problem, &b.orbit, tol);
            if !validation.passed() {
                return Err(ConfigError::Validation(describe_failures(&validation)));
            }
            let coeffs = b.coefficients(tol)?;
            let label = builtin_label(name, &self.problem.params);
            return Ok(ResolvedProblem { label, coeffs, orbit: b.orbit.clone(), validation, builtin: Some(b) });
        }
        let ex = self.problem.explicit.as_ref().expect("checked");
        let sym = self.symmetry.as_ref().expect("checked");
        let n = ex.dimension;
        if n == 0 {
            return Err(ConfigError::Invalid("explicit.dimension must be positive".into()));
        }
        let h = square(sym.h.as_ref().expect("checked"), n, "symmetry.h")?;
        let orbit_modes = modes(&ex.orbit, n, "orbit")?;
        let orbit_fn = fourier_orbit(orbit_modes, ex.period)?;
        let orbit = OrbitWithSymmetry::new(Arc::new(orbit_fn), h.clone(), sym.theta.expect("checked"))?;
        let funcs = FourierCoefficients::new(n, ex.period, modes(&ex.a_modes, n * n, "a_modes")?, modes(&ex.b_modes, n * n, "b_modes")?)?;
        let coeffs = LinearCoefficients::new_unchecked(Arc::new(funcs), h, ex.delay)?;
        let validation = validate_coefficients(&coeffs, &orbit, tol);
        if !validation.passed() {
            return Err(ConfigError::Validation(describe_failures(&validation)));
        }
        Ok(ResolvedProblem { label: "explicit".into(), coeffs, orbit, validation, builtin: None })
    }

    pub fn gain_structure(&self, n: usize) -> Result<Option<CMatrix>, ConfigError> {
        self.scan
            .as_ref()
            .and_then(|s| s.gain_structure.as_ref())
            .map(|v| square(v, n, "scan.gain_structure"))
            .transpose()
    }
}

pub fn builtin_label(name: &str, params: &BTreeMap<String, f64>) -> String {
    let mut s = name.to_string();
    for (k, v) in params {
        s.push_str(&format!(" {k}={v}"));
    }
    s
}

fn describe_failures(report: &ValidationReport) -> String {
    report
        .failures()
        .map(|c| format!("{} residual {:.3e} at {} (tol {:.1e})", c.name, c.max_residual, c.worst_at, report.tol))
        .collect::<Vec<_>>()
        .join("; ")
}

fn square(v: &[f64], n: usize, what: &str) -> Result<CMatrix, ConfigError> {
    if v.len() != n * n {
        return Err(ConfigError::Invalid(format!("{what} needs {} entries, got {}", n * n, v.len())));
    }
    CMatrix::from_real(n, n, v).map_err(|_| ConfigError::Invalid(format!("{what} has non-finite entries")))
}

fn modes(list: &[FourierMode], len: usize, what: &str) -> Result<Vec<(Vec<f64>, Vec<f64>)>, ConfigError> {
    if list.is_empty() {
        return Err(ConfigError::Invalid(format!("{what} needs at least one mode")));
    }
    list.iter()
        .enumerate()
        .map(|(k, m)| {
            let fill = |v: &Vec<f64>| if v.is_empty() { Ok(vec![0.0; len]) } else if v.len() == len { Ok(v.clone()) } else {
                Err(ConfigError::Invalid(format!("{what} mode {k} needs {len} entries")))
            };
            Ok((fill(&m.cos)?, fill(&m.sin)?))
        })
        .collect()
}

/// Validated problem ready for the numerical pipelines.
pub struct ResolvedProblem {
    pub label: String,
    pub coeffs: LinearCoefficients,
    pub orbit: OrbitWithSymmetry,
    pub validation: ValidationReport,
    pub builtin: Option<BuiltinProblem>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_spec_parsing() {
        let (name, p) = parse_builtin_spec("scalar_linear a=1 b=0 tau=0.6931").unwrap();
        assert_eq!(name, "scalar_linear");
        assert_eq!(p["tau"], 0.6931);
        assert!(parse_builtin_spec("x a").is_err());
        assert!(parse_builtin_spec("x a=1 a=2").is_err());
        assert!(parse_builtin_spec("   ").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "schema_version = 1\n[problem]\nbuiltin = \"trivial\"\n[solver]\nflow_tol = 1e-9\nbogus = 1\n";
        assert!(matches!(parse_config(text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = "schema_version = 7\n[problem]\nbuiltin = \"trivial\"\n";
        assert_eq!(parse_config(text), Err(ConfigError::Schema(7)));
    }

    #[test]
    fn explicit_needs_symmetry() {
        let text = r#"
schema_version = 1
[problem.explicit]
dimension = 1
delay = 1.0
period = 1.0
orbit = [{ cos = [0.0] }]
a_modes = [{ cos = [0.0] }]
b_modes = [{ cos = [-1.0] }]
"#;
        assert!(matches!(parse_config(text), Err(ConfigError::Invalid(_))));
        let with_sym = format!("{text}[symmetry]\nh = [1.0]\ntheta = 1.0\n");
        let cfg = parse_config(&with_sym).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.coeffs.dim(), 1);
    }

    #[test]
    fn corrupted_theta_fails_validation() {
        let mut cfg = ProblemConfig::from_builtin_spec("stuart_landau").unwrap();
        cfg.symmetry = Some(SymmetryConfig { h: None, theta: Some(0.51) });
        assert!(matches!(cfg.resolve(), Err(ConfigError::Validation(_))));
    }
}
