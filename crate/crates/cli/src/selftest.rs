//! Invariant suite over the builtin catalog.

use std::fmt::Write as _;
use std::path::Path;

use dwstab::catalog::{default_builtin, BuiltinProblem, BUILTIN_NAMES};
use dwstab::charmat::CharMatrixEvaluator;
use dwstab::flow::{check_flow_symmetry, DEFAULT_FLOW_TOL};
use dwstab::model::{validate_hypotheses, LinearCoefficients};
use dwstab::oracle::{compare_pipelines, discretize, volterra_check, CompareSettings};
use dwstab::roots::RootSettings;
use dwstab::C64;

use crate::{emit, say, CliResult, SelftestArgs, EXIT_ERROR};

const CHECKS: [&str; 5] = ["hypotheses", "flow_symmetry", "volterra", "trivial_root", "oracle"];

#[derive(Clone, Copy, PartialEq)]
enum Outcome {
    Pass,
    Fail,
    Skip,
}

impl Outcome {
    fn label(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "-",
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

/// Thresholds at flow tolerance `tol`, never tighter than at the default.
struct Thresholds {
    validation: f64,
    flow_symmetry: f64,
    volterra: f64,
    trivial_root: f64,
    match_tol: f64,
    ring_match_tol: f64,
}

impl Thresholds {
    fn at(tol: f64) -> Self {
        let r = (tol / DEFAULT_FLOW_TOL).max(1.0);
        Thresholds {
            validation: 1e-8,
            flow_symmetry: 1e-7 * r,
            volterra: 0.1,
            trivial_root: 1e-6 * r,
            match_tol: 1e-4 * r.sqrt(),
            ring_match_tol: 1e-3 * r.sqrt(),
        }
    }
}

fn corrupted(b: BuiltinProblem) -> CliResult<BuiltinProblem> {
    let theta = b.orbit.theta;
    let shifted = if theta + 0.01 <= 1.0 { theta + 0.01 } else { theta - 0.01 };
    b.with_symmetry(None, Some(shifted)).map_err(|e| e.to_string())
}

fn flow_symmetry_residual(coeffs: &LinearCoefficients, tol: f64) -> Result<f64, String> {
    let tau = coeffs.delay();
    let mut worst: f64 = 0.0;
    for z in [C64::new(0.5, 0.0), C64::new(0.3, 0.4), C64::new(-1.2, 0.7)] {
        for (t, s) in [(0.7, 0.2), (1.6, 0.3), (0.5, 0.5)] {
            let r = check_flow_symmetry(coeffs, z, t * tau, s * tau, tol).map_err(|e| e.to_string())?;
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

fn has_delayed_term(coeffs: &LinearCoefficients) -> bool {
    let p = coeffs.delay();
    (0..16).any(|i| coeffs.b(p * i as f64 / 16.0).norm_max() > 0.0)
}

fn run_checks(b: &BuiltinProblem, tol: f64, mesh: usize, th: &Thresholds, log: &mut String) -> [Outcome; 5] {
    let mut out = [Outcome::Skip; 5];
    let validation = validate_hypotheses(&b.problem, &b.orbit, th.validation);
    out[0] = Outcome::from_bool(validation.passed());
    for c in validation.failures() {
        let _ = writeln!(log, "{}: {} residual {:.3e}", b.name, c.name, c.max_residual);
    }
    if !validation.passed() {
        return out;
    }
    let coeffs = match b.coefficients(th.validation) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(log, "{}: {e}", b.name);
            out[1] = Outcome::Fail;
            return out;
        }
    };
    let mut record = |slot: usize, what: &str, r: Result<(bool, String), String>| {
        let (ok, detail) = r.unwrap_or_else(|e| (false, e));
        out[slot] = Outcome::from_bool(ok);
        let _ = writeln!(log, "{}: {what} {detail}", b.name);
    };

    record(
        1,
        "flow symmetry",
        flow_symmetry_residual(&coeffs, tol).map(|r| (r <= th.flow_symmetry, format!("residual {r:.3e}"))),
    );

    if has_delayed_term(&coeffs) {
        let radii = [mesh / 2, mesh].map(|m| {
            discretize(&coeffs, m, tol).map_err(|e| e.to_string()).and_then(|op| volterra_check(&op).map_err(|e| e.to_string()))
        });
        let r = match radii {
            [Ok(coarse), Ok(fine)] => {
                Ok((fine < th.volterra && fine < coarse, format!("radius {fine:.3e} (half mesh {coarse:.3e})")))
            }
            [Err(e), _] | [_, Err(e)] => Err(e),
        };
        record(2, "volterra", r);
    }

    if b.known.iter().any(|k| (k.value - 1.0).norm() == 0.0) {
        let r = CharMatrixEvaluator::new(coeffs.clone(), b.orbit.shift(), tol)
            .and_then(|e| e.det_delta(C64::new(1.0, 0.0)))
            .map(|d| (d.norm() <= th.trivial_root, format!("|det| {:.3e}", d.norm())))
            .map_err(|e| e.to_string());
        record(3, "trivial root", r);
    }

    let match_tol = if b.name == "zn_ring" { th.ring_match_tol } else { th.match_tol };
    let settings = CompareSettings { mesh, mu_floor: 0.05, match_tol, flow_tol: tol, roots: RootSettings::default() };
    let r = compare_pipelines(&coeffs, b.orbit.shift(), &settings)
        .map(|(_, rep)| (rep.passed, format!("max error {:.3e} over {} pair(s)", rep.max_error, rep.pairs.len())))
        .map_err(|e| e.to_string());
    record(4, "oracle", r);
    out
}

pub fn run(args: &SelftestArgs) -> CliResult<u8> {
    let tol = args.tol.unwrap_or(DEFAULT_FLOW_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(format!("--tol must lie in (0, 1), got {tol}"));
    }
    let mesh = args.mesh.unwrap_or(200);
    let th = Thresholds::at(tol);
    let dir = args.out.as_deref();

    let mut table = format!("builtin\t{}\n", CHECKS.join("\t"));
    let mut log = String::new();
    let mut failed = false;
    for name in BUILTIN_NAMES {
        let mut b = default_builtin(name).map_err(|e| e.to_string())?;
        if args.corrupt_theta {
            b = corrupted(b)?;
        }
        let row = run_checks(&b, tol, mesh, &th, &mut log);
        failed |= row.contains(&Outcome::Fail);
        let cells: Vec<&str> = row.iter().map(|o| o.label()).collect();
        let _ = writeln!(table, "{name}\t{}", cells.join("\t"));
    }
    report(dir, &table, &log)?;
    Ok(if failed { EXIT_ERROR } else { 0 })
}

fn report(dir: Option<&Path>, table: &str, log: &str) -> CliResult<()> {
    if dir.is_some() {
        emit(dir, "selftest.tsv", table)?;
        emit(dir, "selftest.log", log)?;
    }
    for line in log.lines() {
        say(dir, line);
    }
    print!("{table}");
    Ok(())
}
