//! Locating all characteristic roots in a region by the argument principle,
//! with recursive cell subdivision, Newton polishing and multiplicity checks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charmat::{CharMatError, CharMatrixEvaluator};
use crate::numkernel::{eigenvalues, CMatrix, C64};

const TWO_PI: f64 = 2.0 * PI;

/// Angle at which disk subdivision starts; keeps cell edges off the real
/// and imaginary axes where symmetric problems put their roots.
const START_ANGLE: f64 = 0.236_067_977_499_789_7;

/// Split positions tried in order, within a 10% margin of the midpoint.
const SPLIT_FRACTIONS: [f64; 5] = [0.4472135954999579, 0.5527864045000421, 0.5, 0.4, 0.6];

// Gauss–Kronrod 7/15.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RootError {
    #[error("invalid search region: {0}")]
    InvalidRegion(String),
    #[error("winding integral {raw} is not within {tol} of an integer")]
    NonInteger { raw: C64, tol: f64 },
    #[error("quadrature did not converge on a panel near z = {z}")]
    Quadrature { z: C64 },
    #[error("contour failed after {attempts} attempts: {last}")]
    ContourFailure { attempts: usize, last: String },
    #[error("could not isolate a cluster of {count} roots near z = {z} at depth {depth}")]
    UnresolvedCluster { z: C64, count: usize, depth: usize },
    #[error("subdivision lost roots: outer count {expected}, located {found}")]
    Incomplete { expected: usize, found: usize },
    #[error(transparent)]
    Eval(#[from] CharMatError),
}

/// Region of the `z`-plane to search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchRegion {
    Disk { center: C64, radius: f64 },
    Rectangle { lo: C64, hi: C64 },
}

impl SearchRegion {
    /// Disk `|z| ≤ 1/μ_min`, i.e. all multipliers with `|μ| ≥ μ_min`.
    pub fn from_min_multiplier(mu_min: f64) -> Result<Self, RootError> {
        if !(mu_min > 0.0 && mu_min.is_finite()) {
            return Err(RootError::InvalidRegion(format!("mu_min must be positive, got {mu_min}")));
        }
        Ok(SearchRegion::Disk { center: C64::new(0.0, 0.0), radius: 1.0 / mu_min })
    }

    pub fn contains(&self, z: C64) -> bool {
        match *self {
            SearchRegion::Disk { center, radius } => (z - center).norm() <= radius,
            SearchRegion::Rectangle { lo, hi } => {
                z.re >= lo.re && z.re <= hi.re && z.im >= lo.im && z.im <= hi.im
            }
        }
    }

    fn validate(&self) -> Result<(), RootError> {
        match *self {
            SearchRegion::Disk { center, radius } => {
                if !(radius > 0.0 && radius.is_finite() && center.is_finite()) {
                    return Err(RootError::InvalidRegion(format!("disk radius {radius}")));
                }
            }
            SearchRegion::Rectangle { lo, hi } => {
                if !(lo.re < hi.re && lo.im < hi.im && lo.is_finite() && hi.is_finite()) {
                    return Err(RootError::InvalidRegion(format!("rectangle {lo} .. {hi}")));
                }
            }
        }
        Ok(())
    }

    fn dilated(&self, rel: f64) -> Self {
        match *self {
            SearchRegion::Disk { center, radius } => SearchRegion::Disk { center, radius: radius * (1.0 + rel) },
            SearchRegion::Rectangle { lo, hi } => {
                let pad = (hi - lo) * (0.5 * rel);
                SearchRegion::Rectangle { lo: lo - pad, hi: hi + pad }
            }
        }
    }
}

/// Closed, positively oriented integration contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contour {
    Circle { center: C64, radius: f64 },
    Rectangle { lo: C64, hi: C64 },
    /// `r0 ≤ |z − center| ≤ r1`, `th0 ≤ arg(z − center) ≤ th1`.
    Sector { center: C64, r0: f64, r1: f64, th0: f64, th1: f64 },
}

#[derive(Debug, Clone, Copy)]
enum Edge {
    Segment { a: C64, b: C64 },
    Arc { center: C64, radius: f64, phi0: f64, phi1: f64 },
}

/// One quadrature panel; nodes depend only on the endpoints so that
/// neighbouring cells sharing an edge evaluate identical points.
#[derive(Debug, Clone, Copy)]
enum Span {
    Segment(C64, C64),
    Arc { center: C64, radius: f64, a: f64, b: f64 },
}

impl Span {
    fn node(&self, x: f64) -> (C64, C64) {
        match *self {
            Span::Segment(p, q) => {
                let mid = (p + q) * 0.5;
                let half = (q - p) * 0.5;
                (mid + half * x, half)
            }
            Span::Arc { center, radius, a, b } => {
                let mid = (a + b) * 0.5;
                let half = (b - a) * 0.5;
                let e = C64::from_polar(radius, mid + half * x);
                (center + e, C64::new(0.0, 1.0) * e * half)
            }
        }
    }

    fn halves(&self) -> (Span, Span) {
        match *self {
            Span::Segment(p, q) => {
                let m = (p + q) * 0.5;
                (Span::Segment(p, m), Span::Segment(m, q))
            }
            Span::Arc { center, radius, a, b } => {
                let m = midpoint(a, b);
                (Span::Arc { center, radius, a, b: m }, Span::Arc { center, radius, a: m, b })
            }
        }
    }
}

fn polar(center: C64, r: f64, th: f64) -> C64 {
    center + C64::from_polar(r, th)
}

fn midpoint(a: f64, b: f64) -> f64 {
    (a + b) * 0.5
}

impl Contour {
    fn edges(&self) -> Vec<Edge> {
        match *self {
            Contour::Circle { center, radius } => {
                vec![Edge::Arc { center, radius, phi0: START_ANGLE, phi1: START_ANGLE + TWO_PI }]
            }
            Contour::Rectangle { lo, hi } => {
                let c1 = C64::new(hi.re, lo.im);
                let c3 = C64::new(lo.re, hi.im);
                vec![
                    Edge::Segment { a: lo, b: c1 },
                    Edge::Segment { a: c1, b: hi },
                    Edge::Segment { a: hi, b: c3 },
                    Edge::Segment { a: c3, b: lo },
                ]
            }
            Contour::Sector { center, r0, r1, th0, th1 } => {
                let full = th1 - th0 >= TWO_PI * (1.0 - 1e-15);
                let mut out = Vec::with_capacity(4);
                if !full {
                    out.push(Edge::Segment { a: polar(center, r0, th0), b: polar(center, r1, th0) });
                }
                out.push(Edge::Arc { center, radius: r1, phi0: th0, phi1: th1 });
                if !full {
                    out.push(Edge::Segment { a: polar(center, r1, th1), b: polar(center, r0, th1) });
                }
                if r0 > 0.0 {
                    out.push(Edge::Arc { center, radius: r0, phi0: th1, phi1: th0 });
                }
                out
            }
        }
    }

    /// Reference point and radius used to normalize moments.
    fn frame(&self) -> (C64, f64) {
        match *self {
            Contour::Circle { center, radius } => (center, radius),
            Contour::Rectangle { lo, hi } => ((lo + hi) * 0.5, ((hi - lo) * 0.5).norm()),
            Contour::Sector { center, r0, r1, th0, th1 } => {
                if th1 - th0 >= PI {
                    return (center, r1);
                }
                let c = polar(center, 0.5 * (r0 + r1), midpoint(th0, th1));
                let corners = [
                    polar(center, r0, th0),
                    polar(center, r0, th1),
                    polar(center, r1, th0),
                    polar(center, r1, th1),
                    polar(center, r1, midpoint(th0, th1)),
                ];
                let rho = corners.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
                (c, rho)
            }
        }
    }

    pub fn contains(&self, z: C64, slack: f64) -> bool {
        match *self {
            Contour::Circle { center, radius } => (z - center).norm() <= radius + slack,
            Contour::Rectangle { lo, hi } => {
                z.re >= lo.re - slack && z.re <= hi.re + slack && z.im >= lo.im - slack && z.im <= hi.im + slack
            }
            Contour::Sector { center, r0, r1, th0, th1 } => {
                let w = z - center;
                let r = w.norm();
                if r < r0 - slack || r > r1 + slack {
                    return false;
                }
                if th1 - th0 >= TWO_PI * (1.0 - 1e-15) || r <= slack {
                    return true;
                }
                let mut a = w.arg();
                while a < th0 {
                    a += TWO_PI;
                }
                while a > th0 + TWO_PI {
                    a -= TWO_PI;
                }
                let ang_slack = slack / r;
                a <= th1 + ang_slack || a - TWO_PI >= th0 - ang_slack
            }
        }
    }

    /// Four sub-cells splitting at fraction `f` in each direction.
    fn split(&self, f: f64) -> Vec<Contour> {
        match *self {
            Contour::Rectangle { lo, hi } => {
                let xm = if f == 0.5 { midpoint(lo.re, hi.re) } else { lo.re + f * (hi.re - lo.re) };
                let ym = if f == 0.5 { midpoint(lo.im, hi.im) } else { lo.im + f * (hi.im - lo.im) };
                vec![
                    Contour::Rectangle { lo, hi: C64::new(xm, ym) },
                    Contour::Rectangle { lo: C64::new(xm, lo.im), hi: C64::new(hi.re, ym) },
                    Contour::Rectangle { lo: C64::new(lo.re, ym), hi: C64::new(xm, hi.im) },
                    Contour::Rectangle { lo: C64::new(xm, ym), hi },
                ]
            }
            Contour::Sector { center, r0, r1, th0, th1 } => {
                let rm = if f == 0.5 { midpoint(r0, r1) } else { r0 + f * (r1 - r0) };
                let tm = if f == 0.5 { midpoint(th0, th1) } else { th0 + f * (th1 - th0) };
                vec![
                    Contour::Sector { center, r0, r1: rm, th0, th1: tm },
                    Contour::Sector { center, r0, r1: rm, th0: tm, th1 },
                    Contour::Sector { center, r0: rm, r1, th0, th1: tm },
                    Contour::Sector { center, r0: rm, r1, th0: tm, th1 },
                ]
            }
            Contour::Circle { center, radius } => {
                Contour::Sector { center, r0: 0.0, r1: radius, th0: START_ANGLE, th1: START_ANGLE + TWO_PI }.split(f)
            }
        }
    }

    fn is_degenerate(&self) -> bool {
        match *self {
            Contour::Circle { radius, .. } => !(radius > 0.0),
            Contour::Rectangle { lo, hi } => !(hi.re > lo.re && hi.im > lo.im),
            Contour::Sector { r0, r1, th0, th1, .. } => !(r1 > r0 && th1 > th0),
        }
    }
}

/// Tunable parameters of the root search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSettings {
    pub max_depth: usize,
    /// Absolute accuracy of each winding number.
    pub quad_tol: f64,
    pub integrality_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub small_circle_rel: f64,
    pub merge_rel: f64,
    pub dilation_rel: f64,
    pub dilation_retries: usize,
    /// Largest cell count resolved directly from contour moments.
    pub cluster_max: usize,
    pub max_panel_depth: usize,
}

impl Default for RootSettings {
    fn default() -> Self {
        Self {
            max_depth: 40,
            quad_tol: 1e-4,
            integrality_tol: 1e-3,
            newton_tol: 1e-12,
            newton_max_iter: 60,
            small_circle_rel: 1e-4,
            merge_rel: 1e-9,
            dilation_rel: 1e-4,
            dilation_retries: 5,
            cluster_max: 8,
            max_panel_depth: 40,
        }
    }
}

/// One located characteristic root with multiplier `μ = 1/z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootRecord {
    pub z: C64,
    pub multiplicity: usize,
    pub multiplier: C64,
    /// Normalized `|det Δ|` at `z`, or the last Newton step if smaller.
    pub newton_residual: f64,
}

/// Statistics about the contour integrals evaluated during a search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub winding_integrals: usize,
    /// Largest distance of a raw winding number from its integer.
    pub max_integrality_defect: f64,
    pub flow_integrations: usize,
    pub max_depth_reached: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSet {
    /// Ordered by decreasing `|μ|`.
    pub roots: Vec<RootRecord>,
    pub trivial_root: Option<RootRecord>,
    /// Region actually searched, after any dilation.
    pub region: SearchRegion,
    pub total_count: usize,
    pub diagnostics: SearchDiagnostics,
}

impl MultiplierSet {
    pub fn multiplicity_sum(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    /// Roots other than the trivial one, with the trivial root's excess
    /// multiplicity kept.
    pub fn nontrivial(&self) -> Vec<RootRecord> {
        let mut out = Vec::new();
        for r in &self.roots {
            match &self.trivial_root {
                Some(t) if t.z == r.z => {
                    if r.multiplicity > 1 {
                        out.push(RootRecord { multiplicity: r.multiplicity - 1, ..r.clone() });
                    }
                }
                _ => out.push(r.clone()),
            }
        }
        out
    }

    pub fn max_nontrivial_modulus(&self) -> Option<f64> {
        self.nontrivial().iter().map(|r| r.multiplier.norm()).reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub classification: Classification,
    pub witness: Option<RootRecord>,
    pub trivial_simple: bool,
    /// `−ln max |μ|` over nontrivial multipliers; positive when all lie inside
    /// the unit circle.
    pub margin: f64,
    pub warnings: Vec<String>,
}

pub const DEFAULT_UNIT_TOL: f64 = 1e-6;
/// Window around `z = 1` in which a root is taken to be the trivial one.
pub const TRIVIAL_WINDOW: f64 = 1e-4;

/// Applies the multiplier stability criterion to a located spectrum.
pub fn classify(set: &MultiplierSet, tol_unit: f64) -> StabilityVerdict {
    let mut warnings = Vec::new();
    let nontrivial = set.nontrivial();
    let worst = nontrivial
        .iter()
        .max_by(|a, b| a.multiplier.norm().total_cmp(&b.multiplier.norm()))
        .cloned();
    let margin = match &worst {
        Some(r) => -r.multiplier.norm().ln(),
        None => match set.region {
            SearchRegion::Disk { center, radius } if center == C64::new(0.0, 0.0) => radius.ln(),
            _ => f64::INFINITY,
        },
    };
    let trivial_simple = set.trivial_root.as_ref().is_some_and(|t| t.multiplicity == 1);
    if let Some(w) = &worst {
        if w.multiplier.norm() >= 1.0 + tol_unit {
            return StabilityVerdict {
                classification: Classification::Unstable,
                witness: worst,
                trivial_simple,
                margin,
                warnings,
            };
        }
    }
    if set.trivial_root.is_none() {
        warnings.push("trivial multiplier 1 not found".into());
    } else if !trivial_simple {
        warnings.push("trivial multiplier is not simple".into());
    }
    if worst.is_none() {
        warnings.push("no nontrivial multipliers in the searched region".into());
    }
    match set.region {
        SearchRegion::Disk { center, radius } if center == C64::new(0.0, 0.0) && radius >= 1.0 => {}
        _ => warnings.push("searched region does not contain the whole unit disk in z".into()),
    }
    let inside = worst.as_ref().is_none_or(|w| w.multiplier.norm() <= 1.0 - tol_unit);
    let region_ok = matches!(set.region, SearchRegion::Disk { center, radius } if center == C64::new(0.0, 0.0) && radius >= 1.0);
    let classification =
        if trivial_simple && inside && region_ok { Classification::Stable } else { Classification::Inconclusive };
    let witness = if classification == Classification::Inconclusive { worst } else { None };
    StabilityVerdict { classification, witness, trivial_simple, margin, warnings }
}

struct Search<'a> {
    eval: &'a CharMatrixEvaluator,
    settings: &'a RootSettings,
    diag: SearchDiagnostics,
}

type Moments = Vec<C64>;

impl<'a> Search<'a> {
    fn integrand(&self, z: C64, dz: C64, frame: (C64, f64), out: &mut [C64]) -> Result<(), RootError> {
        let l = self.eval.log_derivative(z)? * dz;
        let w = (z - frame.0) / frame.1;
        let mut p = C64::new(1.0, 0.0);
        for o in out.iter_mut() {
            *o = l * p;
            p *= w;
        }
        Ok(())
    }

    /// Kronrod estimate and `max |kronrod − gauss|` on one panel.
    fn panel(&self, span: &Span, frame: (C64, f64), k: usize) -> Result<(Moments, f64), RootError> {
        let mut kr = vec![C64::new(0.0, 0.0); k];
        let mut ga = vec![C64::new(0.0, 0.0); k];
        let mut buf = vec![C64::new(0.0, 0.0); k];
        for i in 0..15 {
            let (idx, x) = if i < 8 { (i, -XGK[i]) } else { (14 - i, XGK[14 - i]) };
            let (z, dz) = span.node(x);
            self.integrand(z, dz, frame, &mut buf)?;
            let wk = WGK[idx];
            let wg = if idx % 2 == 1 { WG[idx / 2] } else { 0.0 };
            for j in 0..k {
                kr[j] += buf[j] * wk;
                ga[j] += buf[j] * wg;
            }
        }
        let err = kr.iter().zip(&ga).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        Ok((kr, err))
    }

    fn adaptive(&self, span: Span, tol: f64, frame: (C64, f64), k: usize, depth: usize) -> Result<Moments, RootError> {
        let (val, err) = self.panel(&span, frame, k)?;
        if err <= tol {
            return Ok(val);
        }
        if depth >= self.settings.max_panel_depth {
            return Err(RootError::Quadrature { z: span.node(0.0).0 });
        }
        let (l, r) = span.halves();
        let left = self.adaptive(l, 0.5 * tol, frame, k, depth + 1)?;
        let right = self.adaptive(r, 0.5 * tol, frame, k, depth + 1)?;
        Ok(left.iter().zip(&right).map(|(x, y)| x + y).collect())
    }

    /// Normalized moments `(1/2πi) ∮ w^j L dz`, `w = (z − c)/ρ`, `j < k`.
    fn moments(&mut self, contour: &Contour, k: usize) -> Result<(usize, Moments), RootError> {
        if contour.is_degenerate() {
            return Err(RootError::InvalidRegion(format!("degenerate contour {contour:?}")));
        }
        let frame = contour.frame();
        let edges = contour.edges();
        let tol = TWO_PI * self.settings.quad_tol / edges.len() as f64;
        let mut total = vec![C64::new(0.0, 0.0); k];
        for edge in &edges {
            let span = match *edge {
                Edge::Segment { a, b } => Span::Segment(a, b),
                Edge::Arc { center, radius, phi0, phi1 } => Span::Arc { center, radius, a: phi0, b: phi1 },
            };
            let part = self.adaptive(span, tol, frame, k, 0)?;
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        let scale = C64::new(0.0, TWO_PI);
        let s: Moments = total.into_iter().map(|v| v / scale).collect();
        let raw = s[0];
        let n = raw.re.round();
        let defect = (raw.re - n).abs().max(raw.im.abs());
        self.diag.winding_integrals += 1;
        self.diag.max_integrality_defect = self.diag.max_integrality_defect.max(defect);
        if !(defect < self.settings.integrality_tol) || n < 0.0 {
            return Err(RootError::NonInteger { raw, tol: self.settings.integrality_tol });
        }
        Ok((n as usize, s))
    }

    fn count(&mut self, contour: &Contour) -> Result<usize, RootError> {
        Ok(self.moments(contour, 1)?.0)
    }

    /// Winding count on a circle, dilating on failure.
    fn count_circle(&mut self, center: C64, radius: f64) -> Result<usize, RootError> {
        let mut r = radius;
        let mut last = None;
        for _ in 0..=self.settings.dilation_retries {
            match self.count(&Contour::Circle { center, radius: r }) {
                Ok(n) => return Ok(n),
                Err(e) if retriable(&e) => last = Some(e),
                Err(e) => return Err(e),
            }
            r *= 1.0 + self.settings.dilation_rel;
        }
        Err(RootError::ContourFailure {
            attempts: self.settings.dilation_retries + 1,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }

    /// Newton iteration `z ← z − m / L(z)`; returns the point and the last
    /// step, or `None` if it fails to settle.
    fn newton(&self, z0: C64, m: usize, frame: (C64, f64)) -> Option<(C64, f64)> {
        let mut z = z0;
        let mut prev = f64::INFINITY;
        for it in 0..self.settings.newton_max_iter {
            let l = match self.eval.log_derivative(z) {
                Ok(l) => l,
                Err(CharMatError::SingularOnContour { .. }) => return Some((z, 0.0)),
                Err(_) => return None,
            };
            if l == C64::new(0.0, 0.0) {
                return None;
            }
            let step = C64::new(m as f64, 0.0) / l;
            z -= step;
            let s = step.norm();
            if !z.is_finite() || (z - frame.0).norm() > 2.0 * frame.1 {
                return None;
            }
            let scale = 1.0 + z.norm();
            if s < self.settings.newton_tol * scale {
                return Some((z, s));
            }
            // Stagnation at the flow's noise floor.
            if it >= 3 && s < 1e-7 * scale && s >= 0.5 * prev {
                return Some((z, s));
            }
            prev = s;
        }
        None
    }

    fn record(&self, z: C64, m: usize, step: f64) -> RootRecord {
        let residual = self.eval.normalized_det(z).unwrap_or(f64::NAN);
        RootRecord {
            z,
            multiplicity: m,
            multiplier: C64::new(1.0, 0.0) / z,
            newton_residual: if residual.is_nan() { step } else { residual },
        }
    }

    /// Polishes a candidate and confirms its multiplicity on a small circle.
    fn confirm(&mut self, cell: &Contour, z0: C64, m: usize) -> Result<Option<RootRecord>, RootError> {
        let frame = cell.frame();
        let Some((z, step)) = self.newton(z0, m, frame) else { return Ok(None) };
        let rho = frame.1;
        if !cell.contains(z, 1e-9 * rho) {
            return Ok(None);
        }
        let r = self.settings.small_circle_rel * (1.0 + z.norm());
        match self.count_circle(z, r) {
            Ok(n) if n == m => Ok(Some(self.record(z, m, step))),
            Ok(_) => Ok(None),
            Err(_) => Ok(None),
        }
    }

    /// Tries to resolve all `m` roots of a cell from its moments.
    fn resolve(&mut self, cell: &Contour, m: usize, s: &Moments) -> Result<Option<Vec<RootRecord>>, RootError> {
        let (c, rho) = cell.frame();
        let centroid = c + s[1] / s[0] * rho;
        if let Some(r) = self.confirm(cell, centroid, m)? {
            return Ok(Some(vec![r]));
        }
        if m == 1 || m > self.settings.cluster_max || s.len() <= m {
            return Ok(None);
        }
        let candidates = match moment_roots(&s[1..=m]) {
            Some(c) => c,
            None => return Ok(None),
        };
        // Group nearby candidates into clusters.
        let mut groups: Vec<(C64, usize)> = Vec::new();
        for w in candidates {
            let z = c + w * rho;
            if let Some(g) = groups.iter_mut().find(|g| (g.0 - z).norm() < 1e-3 * rho) {
                g.0 = (g.0 * g.1 as f64 + z) / (g.1 as f64 + 1.0);
                g.1 += 1;
            } else {
                groups.push((z, 1));
            }
        }
        let mut out: Vec<RootRecord> = Vec::new();
        for (z0, k) in groups {
            match self.confirm(cell, z0, k)? {
                Some(r) => {
                    if out.iter().any(|o| (o.z - r.z).norm() <= self.settings.merge_rel * (1.0 + r.z.norm())) {
                        return Ok(None);
                    }
                    out.push(r)
                }
                None => return Ok(None),
            }
        }
        if out.iter().map(|r| r.multiplicity).sum::<usize>() == m {
            Ok(Some(out))
        } else {
            Ok(None)
        }
    }

    /// Children of `cell` with their counts and moments.
    fn subdivide(&mut self, cell: &Contour, m: usize, k: usize) -> Result<Vec<(Contour, usize, Moments)>, RootError> {
        let mut last = String::new();
        for f in SPLIT_FRACTIONS {
            let mut children = Vec::with_capacity(4);
            let mut ok = true;
            for child in cell.split(f) {
                match self.moments(&child, k) {
                    Ok((n, s)) => children.push((child, n, s)),
                    Err(e) if retriable(&e) => {
                        last = e.to_string();
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if ok {
                let sum: usize = children.iter().map(|c| c.1).sum();
                if sum == m {
                    return Ok(children);
                }
                last = format!("children count {sum} != parent count {m}");
            }
        }
        Err(RootError::ContourFailure { attempts: SPLIT_FRACTIONS.len(), last })
    }
}

fn retriable(e: &RootError) -> bool {
    matches!(
        e,
        RootError::NonInteger { .. }
            | RootError::Quadrature { .. }
            | RootError::Eval(CharMatError::SingularOnContour { .. })
            | RootError::Eval(CharMatError::Flow { .. })
    )
}

/// Roots of the polynomial whose power sums are `p[0..m]`.
fn moment_roots(p: &[C64]) -> Option<Vec<C64>> {
    let m = p.len();
    // Newton identities for the elementary symmetric polynomials.
    let mut e = vec![C64::new(1.0, 0.0); m + 1];
    for k in 1..=m {
        let mut acc = C64::new(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[k - i] * p[i - 1] * sign;
        }
        e[k] = acc / k as f64;
    }
    // z^m − e1 z^{m−1} + e2 z^{m−2} − …
    let companion = CMatrix::from_fn(m, m, |i, j| {
        if i == 0 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            e[j + 1] * sign
        } else if i == j + 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    eigenvalues(&companion).ok().map(|s| s.eigenvalues)
}

/// Number of roots of `det Δ` enclosed by `contour`.
pub fn winding_count(eval: &CharMatrixEvaluator, contour: &Contour, settings: &RootSettings) -> Result<usize, RootError> {
    let mut search = Search { eval, settings, diag: SearchDiagnostics::default() };
    search.count(contour)
}

/// Raw (unrounded) winding number `(1/2πi) ∮ L dz`.
pub fn winding_number_raw(
    eval: &CharMatrixEvaluator,
    contour: &Contour,
    settings: &RootSettings,
) -> Result<C64, RootError> {
    let relaxed = RootSettings { integrality_tol: f64::INFINITY, ..settings.clone() };
    let mut search = Search { eval, settings: &relaxed, diag: SearchDiagnostics::default() };
    Ok(search.moments(contour, 1)?.1[0])
}

/// Locates every root of `det Δ` in `region` with multiplicities.
pub fn find_all(
    eval: &CharMatrixEvaluator,
    region: &SearchRegion,
    settings: &RootSettings,
) -> Result<MultiplierSet, RootError> {
    region.validate()?;
    let k = settings.cluster_max.max(1) + 1;
    let mut search = Search { eval, settings, diag: SearchDiagnostics::default() };
    let mut region = *region;
    let mut outer = None;
    let mut last = String::new();
    for _ in 0..=settings.dilation_retries {
        let contour = match region {
            SearchRegion::Disk { center, radius } => Contour::Circle { center, radius },
            SearchRegion::Rectangle { lo, hi } => Contour::Rectangle { lo, hi },
        };
        match search.moments(&contour, k) {
            Ok((n, s)) => {
                outer = Some((contour, n, s));
                break;
            }
            Err(e) if retriable(&e) => last = e.to_string(),
            Err(e) => return Err(e),
        }
        region = region.dilated(settings.dilation_rel);
    }
    let Some((outer, total, s)) = outer else {
        return Err(RootError::ContourFailure { attempts: settings.dilation_retries + 1, last });
    };

    let mut roots: Vec<RootRecord> = Vec::new();
    let mut stack = vec![(outer, total, s, 0usize)];
    while let Some((cell, m, s, depth)) = stack.pop() {
        if m == 0 {
            continue;
        }
        search.diag.max_depth_reached = search.diag.max_depth_reached.max(depth);
        if let Some(found) = search.resolve(&cell, m, &s)? {
            roots.extend(found);
            continue;
        }
        if depth >= settings.max_depth {
            let (c, _) = cell.frame();
            return Err(RootError::UnresolvedCluster { z: c, count: m, depth });
        }
        let children = search.subdivide(&cell, m, k)?;
        for (child, n, s) in children.into_iter().rev() {
            stack.push((child, n, s, depth + 1));
        }
    }

    // Merge duplicates found across cell boundaries.
    roots.sort_by(|a, b| a.z.norm().total_cmp(&b.z.norm()).then(a.z.arg().total_cmp(&b.z.arg())));
    let mut merged: Vec<RootRecord> = Vec::new();
    for r in roots {
        if let Some(prev) =
            merged.iter_mut().find(|p| (p.z - r.z).norm() <= settings.merge_rel * (1.0 + r.z.norm()))
        {
            prev.multiplicity += r.multiplicity;
        } else {
            merged.push(r);
        }
    }
    let found: usize = merged.iter().map(|r| r.multiplicity).sum();
    if found != total {
        return Err(RootError::Incomplete { expected: total, found });
    }
    merged.sort_by(|a, b| {
        b.multiplier
            .norm()
            .total_cmp(&a.multiplier.norm())
            .then(b.multiplier.re.total_cmp(&a.multiplier.re))
            .then(b.multiplier.im.total_cmp(&a.multiplier.im))
    });
    let trivial_root = merged
        .iter()
        .filter(|r| (r.z - 1.0).norm() <= TRIVIAL_WINDOW)
        .min_by(|a, b| (a.z - 1.0).norm().total_cmp(&(b.z - 1.0).norm()))
        .cloned();
    search.diag.flow_integrations = eval.integrations();
    Ok(MultiplierSet { roots: merged, trivial_root, region, total_count: total, diagnostics: search.diag })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(mu: C64, m: usize) -> RootRecord {
        RootRecord { z: 1.0 / mu, multiplicity: m, multiplier: mu, newton_residual: 0.0 }
    }

    fn set(roots: Vec<RootRecord>) -> MultiplierSet {
        let trivial_root = roots.iter().find(|r| (r.z - 1.0).norm() < 1e-4).cloned();
        MultiplierSet {
            total_count: roots.iter().map(|r| r.multiplicity).sum(),
            roots,
            trivial_root,
            region: SearchRegion::Disk { center: C64::new(0.0, 0.0), radius: 10.0 },
            diagnostics: SearchDiagnostics::default(),
        }
    }

    #[test]
    fn classify_stable() {
        let v = classify(&set(vec![record(C64::new(1.0, 0.0), 1), record(C64::new(0.5, 0.1), 1)]), 1e-6);
        assert_eq!(v.classification, Classification::Stable);
        assert!(v.margin > 0.0);
    }

    #[test]
    fn classify_unstable_without_trivial() {
        let v = classify(&set(vec![record(C64::new(2.0, 0.0), 1)]), 1e-6);
        assert_eq!(v.classification, Classification::Unstable);
        assert!((v.witness.unwrap().multiplier.re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn classify_double_trivial_inconclusive() {
        let v = classify(&set(vec![record(C64::new(1.0, 0.0), 2)]), 1e-6);
        assert_eq!(v.classification, Classification::Inconclusive);
        assert!(!v.trivial_simple);
    }

    #[test]
    fn classify_near_unit_circle_inconclusive() {
        let v = classify(&set(vec![record(C64::new(1.0, 0.0), 1), record(C64::new(0.0, 1.0 - 1e-9), 1)]), 1e-6);
        assert_eq!(v.classification, Classification::Inconclusive);
    }

    #[test]
    fn moment_roots_recovers_pair() {
        let r = [C64::new(0.3, 0.1), C64::new(-0.2, 0.4)];
        let p: Vec<C64> = (1..=2).map(|k| r[0].powu(k) + r[1].powu(k)).collect();
        let mut got = moment_roots(&p).unwrap();
        got.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((got[0] - r[1]).norm() < 1e-12 && (got[1] - r[0]).norm() < 1e-12);
    }

    #[test]
    fn sector_containment() {
        let c = Contour::Sector { center: C64::new(0.0, 0.0), r0: 1.0, r1: 2.0, th0: 6.0, th1: 7.0 };
        assert!(c.contains(C64::from_polar(1.5, 0.5), 0.0));
        assert!(!c.contains(C64::from_polar(1.5, 1.5), 0.0));
        assert!(!c.contains(C64::from_polar(2.5, 0.5), 0.0));
    }

    #[test]
    fn split_children_tile_parent() {
        let c = Contour::Circle { center: C64::new(0.0, 0.0), radius: 3.0 };
        let kids = c.split(0.5);
        for p in [C64::new(0.5, 0.2), C64::new(-2.0, 1.0), C64::new(0.1, -2.5)] {
            assert_eq!(kids.iter().filter(|k| k.contains(p, 0.0)).count(), 1);
        }
    }
}
