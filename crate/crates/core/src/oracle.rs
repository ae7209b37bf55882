//! An independent check of the characteristic-matrix pipeline: the
//! monodromy-type operator `U_h` is discretized on a mesh of the delay
//! interval and its eigenvalues are compared with the located multipliers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charmat::{CharMatError, CharMatrixEvaluator};
use crate::flow::{y_a_at_times, FlowError};
use crate::model::{LinearCoefficients, OrbitWithSymmetry};
use crate::numkernel::{eigenvalues, eigenvalues_with_cap, lu_factor, CMatrix, NumError, C64, DEFAULT_DIMENSION_CAP};
use crate::roots::{find_all, MultiplierSet, RootError, RootSettings, SearchRegion};

pub const MIN_MESH: usize = 8;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("mesh must have at least {MIN_MESH} intervals, got {0}")]
    MeshTooSmall(usize),
    #[error("discretized dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("spectra disagree: max error {:.3e}, {} unmatched eigenvalues, {} unmatched roots",
        .0.max_error, .0.unmatched_eigenvalues.len(), .0.unmatched_roots.len())]
    Discrepancy(Box<ComparisonReport>),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    CharMat(#[from] CharMatError),
}

/// Matrix approximation of `U_h = V + R` on `M + 1` nodes of `[−τ, 0]`.
#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub mesh: usize,
    pub dim: usize,
    pub tau: f64,
    pub nodes: Vec<f64>,
    /// Full operator `V + R`.
    pub u_h: CMatrix,
    /// Integral (Volterra) part.
    pub v: CMatrix,
    /// Finite-rank part `R = D C`.
    pub r: CMatrix,
    /// Evaluation at `θ = 0`: `N × N(M+1)`.
    pub c_map: CMatrix,
    /// `N(M+1) × N`, blocks `h⁻¹ Y_A(τ + θ_i)`.
    pub d_map: CMatrix,
}

// Three-point Gauss–Legendre on [0, 1].
const GAUSS3_X: [f64; 3] = [0.112_701_665_379_258_31, 0.5, 0.887_298_334_620_741_7];
const GAUSS3_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Builds the discretized operator with `mesh` intervals.
pub fn discretize(coeffs: &LinearCoefficients, mesh: usize, tol: f64) -> Result<DiscretizedOperator, OracleError> {
    if mesh < MIN_MESH {
        return Err(OracleError::MeshTooSmall(mesh));
    }
    let n = coeffs.dim();
    let big = n * (mesh + 1);
    if big > DEFAULT_DIMENSION_CAP {
        return Err(OracleError::DimensionCap { dim: big, cap: DEFAULT_DIMENSION_CAP });
    }
    let tau = coeffs.delay();
    let dt = tau / mesh as f64;
    let nodes: Vec<f64> = (0..=mesh).map(|j| if j == mesh { 0.0 } else { -tau + j as f64 * dt }).collect();

    // All times at which Y_A is needed, in one batch.
    let mut times = Vec::with_capacity(2 * (mesh + 1) + 3 * mesh);
    times.extend_from_slice(&nodes);
    times.extend(nodes.iter().map(|t| tau + t));
    for k in 0..mesh {
        for x in GAUSS3_X {
            times.push(nodes[k] + x * dt);
        }
    }
    let ya = y_a_at_times(coeffs, &times, tol)?;
    let (ya_nodes, rest) = ya.split_at(mesh + 1);
    let (ya_shifted, ya_gauss) = rest.split_at(mesh + 1);

    let h_inv = coeffs.h_inv();
    let mut p = Vec::with_capacity(mesh);
    let mut q = Vec::with_capacity(mesh);
    let (mut a_buf, mut b_buf) = (CMatrix::zeros(n, n), CMatrix::zeros(n, n));
    for k in 0..mesh {
        let mut pk = CMatrix::zeros(n, n);
        let mut qk = CMatrix::zeros(n, n);
        for (g, (&x, &w)) in GAUSS3_X.iter().zip(&GAUSS3_W).enumerate() {
            let s = nodes[k] + x * dt;
            coeffs.eval_into(s, &mut a_buf, &mut b_buf);
            let kernel = lu_factor(&ya_gauss[3 * k + g])?.inverse()?.matmul(&b_buf).matmul(h_inv);
            pk = pk.add(&kernel.scale(C64::new(w * (1.0 - x) * dt, 0.0)));
            qk = qk.add(&kernel.scale(C64::new(w * x * dt, 0.0)));
        }
        p.push(pk);
        q.push(qk);
    }

    let mut v = CMatrix::zeros(big, big);
    for i in 0..=mesh {
        for j in 0..=i {
            let mut weight = CMatrix::zeros(n, n);
            if j < i {
                weight = weight.add(&p[j]);
            }
            if j >= 1 {
                weight = weight.add(&q[j - 1]);
            }
            if i == 0 {
                continue;
            }
            v.set_block(i * n, j * n, &ya_nodes[i].matmul(&weight));
        }
    }

    let mut c_map = CMatrix::zeros(n, big);
    c_map.set_block(0, mesh * n, &CMatrix::identity(n));
    let mut d_map = CMatrix::zeros(big, n);
    for i in 0..=mesh {
        d_map.set_block(i * n, 0, &h_inv.matmul(&ya_shifted[i]));
    }
    let mut r = CMatrix::zeros(big, big);
    r.set_block(0, mesh * n, &d_map);
    let u_h = v.add(&r);
    Ok(DiscretizedOperator { mesh, dim: n, tau, nodes, u_h, v, r, c_map, d_map })
}

fn is_block_lower_triangular(m: &CMatrix, block: usize) -> bool {
    let size = m.rows();
    for i in 0..size {
        for j in 0..size {
            if j / block > i / block && m[(i, j)] != C64::new(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

/// Spectral radius of the Volterra part; small for fine meshes.
pub fn volterra_check(op: &DiscretizedOperator) -> Result<f64, OracleError> {
    let n = op.dim;
    if is_block_lower_triangular(&op.v, n) {
        let mut rho: f64 = 0.0;
        for i in 0..=op.mesh {
            let spec = eigenvalues(&op.v.block(i * n, i * n, n, n))?;
            rho = rho.max(spec.spectral_radius());
        }
        Ok(rho)
    } else {
        Ok(eigenvalues_with_cap(&op.v, DEFAULT_DIMENSION_CAP)?.spectral_radius())
    }
}

/// `(tr((DC)^k), tr((CD)^k))` for `k = 1..=kmax`, the former from the
/// stored dense `R`.
pub fn factorization_trace_moments(op: &DiscretizedOperator, kmax: usize) -> Vec<(C64, C64)> {
    let cd = op.c_map.matmul(&op.d_map);
    let mut out = Vec::with_capacity(kmax);
    let mut rk = op.r.clone();
    let mut cdk = cd.clone();
    for k in 1..=kmax {
        if k > 1 {
            rk = rk.matmul(&op.r);
            cdk = cdk.matmul(&cd);
        }
        out.push((rk.trace(), cdk.trace()));
    }
    out
}

/// `‖U_h v − v‖ / ‖v‖` for `v` the orbit derivative sampled on the nodes,
/// which is an eigenfunction for the trivial multiplier.
pub fn derivative_eigen_residual(op: &DiscretizedOperator, orbit: &OrbitWithSymmetry) -> f64 {
    let mut v = Vec::with_capacity(op.dim * (op.mesh + 1));
    for &t in &op.nodes {
        v.extend(orbit.derivative(t).into_iter().map(|x| C64::new(x, 0.0)));
    }
    let uv = op.u_h.matvec(&v);
    let num: f64 = uv.iter().zip(&v).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub multiplier: C64,
    pub multiplicity: usize,
    /// Eigenvalues assigned to this multiplier, one per multiplicity.
    pub eigenvalues: Vec<C64>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub mesh: usize,
    pub mu_floor: f64,
    pub match_tol: f64,
    pub pairs: Vec<MatchedPair>,
    pub unmatched_eigenvalues: Vec<C64>,
    pub unmatched_roots: Vec<C64>,
    pub max_error: f64,
    pub passed: bool,
}

/// Matches multipliers with `|μ| ≥ mu_floor` against operator eigenvalues in
/// both directions.  Candidates slightly below the floor take part in the
/// matching so that pairs straddling it are not reported as unmatched.
pub fn spectrum_compare(
    op: &DiscretizedOperator,
    multipliers: &MultiplierSet,
    mu_floor: f64,
    match_tol: f64,
) -> Result<ComparisonReport, OracleError> {
    let spectrum = eigenvalues_with_cap(&op.u_h, DEFAULT_DIMENSION_CAP)?;
    let report = compare_with_eigenvalues(&spectrum.eigenvalues, op.mesh, multipliers, mu_floor, match_tol);
    if report.passed {
        Ok(report)
    } else {
        Err(OracleError::Discrepancy(Box::new(report)))
    }
}

pub fn compare_with_eigenvalues(
    eigs: &[C64],
    mesh: usize,
    multipliers: &MultiplierSet,
    mu_floor: f64,
    match_tol: f64,
) -> ComparisonReport {
    let slack = 0.8 * mu_floor;
    let evs: Vec<C64> = eigs.iter().copied().filter(|e| e.norm() >= slack).collect();
    let roots: Vec<(C64, usize)> = multipliers
        .roots
        .iter()
        .filter(|r| r.multiplier.norm() >= slack)
        .map(|r| (r.multiplier, r.multiplicity))
        .collect();
    let mut slots = Vec::new();
    for (ri, &(_, m)) in roots.iter().enumerate() {
        slots.extend(std::iter::repeat_n(ri, m));
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(slots.len() * evs.len());
    for (si, &ri) in slots.iter().enumerate() {
        for (ei, e) in evs.iter().enumerate() {
            candidates.push((match_distance(roots[ri].0, *e), si, ei));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut slot_used = vec![None; slots.len()];
    let mut ev_used = vec![false; evs.len()];
    for (_, si, ei) in candidates {
        if slot_used[si].is_none() && !ev_used[ei] {
            slot_used[si] = Some(ei);
            ev_used[ei] = true;
        }
    }
    let mut pairs = Vec::new();
    let mut unmatched_roots = Vec::new();
    let mut max_error: f64 = 0.0;
    let mut passed = true;
    for (ri, &(mu, m)) in roots.iter().enumerate() {
        let assigned: Vec<C64> =
            slots.iter().zip(&slot_used).filter(|(&r, _)| r == ri).filter_map(|(_, e)| e.map(|e| evs[e])).collect();
        let error = assigned.iter().map(|e| (e - mu).norm()).fold(0.0, f64::max);
        let relevant = mu.norm() >= mu_floor || assigned.iter().any(|e| e.norm() >= mu_floor);
        if assigned.len() < m {
            if relevant {
                unmatched_roots.push(mu);
                passed = false;
            }
        }
        if relevant {
            max_error = max_error.max(error);
            if error > match_tol {
                passed = false;
            }
        }
        pairs.push(MatchedPair { multiplier: mu, multiplicity: m, eigenvalues: assigned, error });
    }
    let unmatched_eigenvalues: Vec<C64> =
        evs.iter().zip(&ev_used).filter(|(e, used)| !**used && e.norm() >= mu_floor).map(|(e, _)| *e).collect();
    if !unmatched_eigenvalues.is_empty() {
        passed = false;
    }
    ComparisonReport { mesh, mu_floor, match_tol, pairs, unmatched_eigenvalues, unmatched_roots, max_error, passed }
}

/// Distance combining log-modulus and phase differences, used only for the
/// assignment; reported errors are absolute.
fn match_distance(a: C64, b: C64) -> f64 {
    let dl = (a.norm().ln() - b.norm().ln()).abs();
    let mut dp = (a.arg() - b.arg()).abs();
    if dp > std::f64::consts::PI {
        dp = 2.0 * std::f64::consts::PI - dp;
    }
    (dl * dl + dp * dp).sqrt() + (a - b).norm()
}

/// Settings for a full two-pipeline comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareSettings {
    pub mesh: usize,
    pub mu_floor: f64,
    pub match_tol: f64,
    pub flow_tol: f64,
    pub roots: RootSettings,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self { mesh: 200, mu_floor: 0.05, match_tol: 1e-4, flow_tol: 1e-10, roots: RootSettings::default() }
    }
}

/// Locates multipliers with `|μ| ≥ 0.9 · mu_floor` and compares them with
/// the discretized operator.
pub fn compare_pipelines(
    coeffs: &LinearCoefficients,
    shift: f64,
    settings: &CompareSettings,
) -> Result<(MultiplierSet, ComparisonReport), OracleError> {
    let eval = CharMatrixEvaluator::new(coeffs.clone(), shift, settings.flow_tol)?;
    let region = SearchRegion::from_min_multiplier(0.9 * settings.mu_floor)?;
    let set = find_all(&eval, &region, &settings.roots)?;
    let op = discretize(coeffs, settings.mesh, settings.flow_tol)?;
    let spectrum = eigenvalues_with_cap(&op.u_h, DEFAULT_DIMENSION_CAP)?;
    let report = compare_with_eigenvalues(&spectrum.eigenvalues, op.mesh, &set, settings.mu_floor, settings.match_tol);
    Ok((set, report))
}
