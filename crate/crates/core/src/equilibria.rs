//! Equilibria of the harvested competition system and their local stability.
//!
//! Interior equilibria are roots of the reduced nullcline map
//!
//! ```text
//! phi(v) = (a2 b1 q - c2 a1) + (c1 c2 - b1 b2) v - b1 (1 - q) v^(p-1)
//! ```
//!
//! paired with `u = (a1 - c1 v) / b1`, and boundary equilibria `(0, v)` are
//! roots of `psi(v) = a2 q - b2 v - (1 - q) v^(p-1)`. Both maps diverge to
//! `-inf` at `0+` and have at most one interior extremum, so every root is
//! found by bracketing on a monotone piece.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FtemError, Result};
use crate::linalg::Mat2;
use crate::model::{self, CompetitionParams, State2};
use crate::roots::{find_root, grow_until, shrink_until};

/// Relative band on `|Re λ|` below which an equilibrium is non-hyperbolic.
pub const HYPERBOLICITY_TOL: f64 = 1e-8;
/// Relative tolerance on the extremal value of `phi`/`psi` for a double root.
pub const TANGENCY_TOL: f64 = 1e-12;
/// Residual accepted by [`classify`] for a caller-supplied equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-8;

const ROOT_XTOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EquilibriumKind {
    TrivialE0,
    BoundaryEu,
    BoundaryEv,
    Interior,
}

/// Local character of an equilibrium. `StableNode` includes stable foci
/// (the eigenvalues are reported alongside).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stability {
    StableNode,
    Saddle,
    Unstable,
    Nonhyperbolic,
    FiniteTimeAttractor,
}

impl Stability {
    pub fn is_unstable(self) -> bool {
        matches!(self, Stability::Saddle | Stability::Unstable)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::StableNode => "STABLE_NODE",
            Stability::Saddle => "SADDLE",
            Stability::Unstable => "UNSTABLE",
            Stability::Nonhyperbolic => "NONHYPERBOLIC",
            Stability::FiniteTimeAttractor => "FINITE_TIME_ATTRACTOR",
        }
    }
}

/// Closed-form q-window for a stable interior point in the weak-competition
/// case. Reported for reference only; the eigenvalue classification is
/// authoritative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityBounds {
    pub q_lower: f64,
    pub q_upper: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub location: State2,
    pub kind: EquilibriumKind,
    pub stability: Stability,
    /// Absent where the vector field is not differentiable (`v = 0`, `q < 1`).
    pub eigenvalues: Option<[Complex64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bounds: Option<StabilityBounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub params: CompetitionParams,
    /// Ordered by kind (E0, Eu, Ev, interior), then by `v` ascending.
    pub points: Vec<EquilibriumPoint>,
    /// Maximizer of `psi`; present when `q < 1` and `p < 1`.
    pub v_phi: Option<f64>,
    /// Maximizer of `phi`; present when additionally `b1 b2 - c1 c2 > 0`.
    pub v_max: Option<f64>,
    pub phi_at_vmax: Option<f64>,
    pub interior_count: usize,
    pub boundary_v_count: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl EquilibriumReport {
    pub fn interior(&self) -> impl Iterator<Item = &EquilibriumPoint> {
        self.points.iter().filter(|p| p.kind == EquilibriumKind::Interior)
    }

    pub fn boundary_v(&self) -> impl Iterator<Item = &EquilibriumPoint> {
        self.points.iter().filter(|p| p.kind == EquilibriumKind::BoundaryEv)
    }

    pub fn of_kind(&self, kind: EquilibriumKind) -> impl Iterator<Item = &EquilibriumPoint> {
        self.points.iter().filter(move |p| p.kind == kind)
    }
}

fn require_harvested(p: &CompetitionParams) -> Result<()> {
    if p.q >= 1.0 {
        return Err(FtemError::InvalidParams("nullcline analysis needs q < 1".into()));
    }
    Ok(())
}

/// Reduced interior nullcline map.
pub fn phi(v: f64, p: &CompetitionParams) -> Result<f64> {
    if !(v > 0.0) {
        return Err(FtemError::Domain(format!("phi needs v > 0, got {v}")));
    }
    Ok((p.a2 * p.b1 * p.q - p.c2 * p.a1) - p.competition_margin() * v
        - p.b1 * (1.0 - p.q) * v.powf(p.p - 1.0))
}

pub fn phi_prime(v: f64, p: &CompetitionParams) -> f64 {
    -p.competition_margin() + p.b1 * (1.0 - p.q) * (1.0 - p.p) * v.powf(p.p - 2.0)
}

pub fn phi_second(v: f64, p: &CompetitionParams) -> f64 {
    -p.b1 * (1.0 - p.q) * (1.0 - p.p) * (2.0 - p.p) * v.powf(p.p - 3.0)
}

/// Boundary nullcline map: `v`-equation divided by `v` on `u = 0`.
pub fn psi(v: f64, p: &CompetitionParams) -> Result<f64> {
    if !(v > 0.0) {
        return Err(FtemError::Domain(format!("psi needs v > 0, got {v}")));
    }
    Ok(p.a2 * p.q - p.b2 * v - (1.0 - p.q) * v.powf(p.p - 1.0))
}

pub fn psi_prime(v: f64, p: &CompetitionParams) -> f64 {
    -p.b2 + (1.0 - p.q) * (1.0 - p.p) * v.powf(p.p - 2.0)
}

/// Maximizer of `phi`: `v_max^(p-2) = (b1 b2 - c1 c2) / (b1 (1-q) (1-p))`.
pub fn v_max(p: &CompetitionParams) -> Result<f64> {
    require_harvested(p)?;
    let margin = p.competition_margin();
    if margin <= 0.0 {
        return Err(FtemError::InvalidParams(format!(
            "v_max needs b1 b2 - c1 c2 > 0, got {margin}"
        )));
    }
    if p.p >= 1.0 {
        return Err(FtemError::InvalidParams("v_max needs p < 1".into()));
    }
    Ok((margin / (p.b1 * (1.0 - p.q) * (1.0 - p.p))).powf(1.0 / (p.p - 2.0)))
}

/// Maximizer of `psi`: `v_phi^(p-2) = b2 / ((1-q) (1-p))`.
pub fn v_phi(p: &CompetitionParams) -> Result<f64> {
    require_harvested(p)?;
    if p.p >= 1.0 {
        return Err(FtemError::InvalidParams("v_phi needs p < 1".into()));
    }
    Ok((p.b2 / ((1.0 - p.q) * (1.0 - p.p))).powf(1.0 / (p.p - 2.0)))
}

/// Boundary root found at a tangency of `psi` (returned once).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullclineRoot {
    pub v: f64,
    pub tangent: bool,
}

fn boundary_roots(p: &CompetitionParams) -> Result<Vec<NullclineRoot>> {
    require_harvested(p)?;
    let f = |v: f64| psi(v, p);
    if p.p == 1.0 {
        // linear harvesting: psi is an affine decreasing function
        let v = (p.a2 * p.q - (1.0 - p.q)) / p.b2;
        return Ok(if v > 0.0 { vec![NullclineRoot { v, tangent: false }] } else { vec![] });
    }
    let vp = v_phi(p)?;
    let top = f(vp)?;
    if top.abs() <= TANGENCY_TOL * p.a2 * p.q {
        return Ok(vec![NullclineRoot { v: vp, tangent: true }]);
    }
    if top < 0.0 {
        return Ok(vec![]);
    }
    let lo = shrink_until(f, vp, 0.1, true)?;
    let v1 = find_root(f, lo, vp, ROOT_XTOL * vp)?;
    // psi(a2/b2) = a2 (q - 1) - (1-q)(a2/b2)^(p-1) < 0, so the upper root lies in Gamma
    let hi = grow_until(f, (p.a2 / p.b2).max(vp), 2.0, true, 64)?;
    let v2 = find_root(f, vp, hi, ROOT_XTOL * hi)?;
    Ok(vec![NullclineRoot { v: v1, tangent: false }, NullclineRoot { v: v2, tangent: false }])
}

/// `v` coordinates of the boundary equilibria `(0, v)` for `0 < q < 1`.
pub fn boundary_v_equilibria(p: &CompetitionParams) -> Result<Vec<f64>> {
    Ok(boundary_roots(p)?.into_iter().map(|r| r.v).collect())
}

/// All positive roots of `phi` (interior `v` candidates before the `u > 0`
/// filter), ascending. `warnings` collects notes about bracket extension.
pub fn phi_roots(p: &CompetitionParams, warnings: &mut Vec<String>) -> Result<Vec<NullclineRoot>> {
    require_harvested(p)?;
    let f = |v: f64| phi(v, p);
    let v_ub = p.a2 / p.b2;
    let margin = p.competition_margin();
    if p.p == 1.0 {
        // phi is affine: constant - margin * v
        let c = p.a2 * p.b1 * p.q - p.c2 * p.a1 - p.b1 * (1.0 - p.q);
        if margin == 0.0 {
            return Ok(vec![]);
        }
        let v = c / margin;
        return Ok(if v > 0.0 { vec![NullclineRoot { v, tangent: false }] } else { vec![] });
    }
    if margin <= 0.0 {
        // strictly increasing from -inf
        let lo = shrink_until(f, v_ub, 0.1, true)?;
        let hi = match grow_until(f, v_ub, 2.0, false, 200) {
            Ok(hi) => hi,
            Err(FtemError::NoSignChange { .. }) => return Ok(vec![]),
            Err(e) => return Err(e),
        };
        let v = find_root(f, lo, hi, ROOT_XTOL * hi)?;
        return Ok(vec![NullclineRoot { v, tangent: false }]);
    }
    let vm = v_max(p)?;
    let top = f(vm)?;
    let scale = (p.a2 * p.b1 * p.q).abs() + (p.c2 * p.a1).abs();
    if top.abs() <= TANGENCY_TOL * scale {
        return Ok(vec![NullclineRoot { v: vm, tangent: true }]);
    }
    if top < 0.0 {
        return Ok(vec![]);
    }
    let lo = shrink_until(f, vm, 0.1, true)?;
    let v1 = find_root(f, lo, vm, ROOT_XTOL * vm)?;
    let start = v_ub.max(vm);
    if f(start)? > 0.0 {
        warnings.push(format!(
            "phi({start:.6e}) > 0: root bracket extended beyond a2/b2 (such roots have u < 0)"
        ));
    }
    let hi = grow_until(f, start, 2.0, true, 200)?;
    let v2 = find_root(f, vm, hi, ROOT_XTOL * hi)?;
    Ok(vec![NullclineRoot { v: v1, tangent: false }, NullclineRoot { v: v2, tangent: false }])
}

/// Interior (positive) equilibria of the harvested system, `v` ascending.
pub fn interior_equilibria(p: &CompetitionParams) -> Result<Vec<State2>> {
    Ok(interior_with_flags(p, &mut Vec::new())?.into_iter().map(|(s, _)| s).collect())
}

fn interior_with_flags(p: &CompetitionParams, warnings: &mut Vec<String>) -> Result<Vec<(State2, bool)>> {
    let roots = phi_roots(p, warnings)?;
    Ok(roots
        .into_iter()
        .filter_map(|r| {
            let u = (p.a1 - p.c1 * r.v) / p.b1;
            (u > 0.0 && r.v > 0.0).then_some((State2::new(u, r.v), r.tangent))
        })
        .collect())
}

fn stability_from_eigenvalues(ev: &[Complex64; 2], scale: f64) -> Stability {
    let band = HYPERBOLICITY_TOL * scale.max(f64::MIN_POSITIVE);
    if ev.iter().any(|l| l.re.abs() < band) {
        Stability::Nonhyperbolic
    } else if ev.iter().all(|l| l.re < 0.0) {
        Stability::StableNode
    } else if ev.iter().all(|l| l.re > 0.0) {
        Stability::Unstable
    } else {
        Stability::Saddle
    }
}

fn linear_point(s: State2, kind: EquilibriumKind, p: &CompetitionParams) -> Result<EquilibriumPoint> {
    let j: Mat2 = model::jacobian_modified(s, p)?;
    let ev = j.eigenvalues();
    let stability = stability_from_eigenvalues(&ev, j.max_abs());
    Ok(EquilibriumPoint { location: s, kind, stability, eigenvalues: Some(ev), bounds: None })
}

/// Closed-form stability window for an interior point with `b1 b2 > c1 c2`.
pub fn stability_bounds(s: State2, p: &CompetitionParams) -> Option<StabilityBounds> {
    let margin = p.competition_margin();
    if margin <= 0.0 || p.q >= 1.0 || p.p >= 1.0 {
        return None;
    }
    let vm = v_max(p).ok()?;
    let one_p = 1.0 - p.p;
    let denom = p.a2 * p.b1 * one_p;
    let trace_branch = p.a1 + p.a1 * p.c2 * one_p + ((p.b2 - p.c1) + margin * one_p) * s.v;
    let det_branch = p.a1 * p.c2 * one_p + margin * (2.0 - p.p) / p.b1 * s.v;
    let q_upper = trace_branch.min(det_branch) / denom;
    let q_lower = (margin * (2.0 - p.p) * vm + p.c2 * p.a1 * one_p) / denom;
    Some(StabilityBounds { q_lower, q_upper, holds: q_lower < p.q && p.q < q_upper })
}

/// Classify an equilibrium location.
///
/// `E0` is always unstable. With `q < 1`, `Eu = (a1/b1, 0)` attracts nearby
/// data in finite time and has no linearization. Every other point is
/// classified by the eigenvalues of the Jacobian.
pub fn classify(s: State2, p: &CompetitionParams) -> Result<EquilibriumPoint> {
    p.validate()?;
    let r = model::rhs_modified(s, p)?;
    let residual = r.norm();
    if residual > RESIDUAL_TOL * (1.0 + s.norm()) {
        return Err(FtemError::NotEquilibrium { u: s.u, v: s.v, residual });
    }
    let (gu, gv) = p.gamma();
    let zero_u = s.u.abs() <= 1e-12 * gu;
    let zero_v = s.v.abs() <= 1e-12 * gv;
    let loc = State2::new(if zero_u { 0.0 } else { s.u }, if zero_v { 0.0 } else { s.v });
    match (zero_u, zero_v) {
        (true, true) => {
            let eigenvalues = if p.q == 1.0 {
                Some(model::jacobian_classical(loc, p).eigenvalues())
            } else {
                None
            };
            Ok(EquilibriumPoint {
                location: loc,
                kind: EquilibriumKind::TrivialE0,
                stability: Stability::Unstable,
                eigenvalues,
                bounds: None,
            })
        }
        (false, true) => {
            if p.q < 1.0 && p.p < 1.0 {
                Ok(EquilibriumPoint {
                    location: loc,
                    kind: EquilibriumKind::BoundaryEu,
                    stability: Stability::FiniteTimeAttractor,
                    eigenvalues: None,
                    bounds: None,
                })
            } else {
                linear_point(loc, EquilibriumKind::BoundaryEu, p)
            }
        }
        (true, false) => linear_point(loc, EquilibriumKind::BoundaryEv, p),
        (false, false) => {
            let mut pt = linear_point(loc, EquilibriumKind::Interior, p)?;
            pt.bounds = stability_bounds(loc, p);
            Ok(pt)
        }
    }
}

fn force_nonhyperbolic(mut pt: EquilibriumPoint, tangent: bool) -> EquilibriumPoint {
    if tangent {
        pt.stability = Stability::Nonhyperbolic;
    }
    pt
}

/// Every equilibrium of the system with its classification.
pub fn full_report(p: &CompetitionParams) -> Result<EquilibriumReport> {
    p.validate()?;
    let mut warnings = Vec::new();
    let mut points = vec![classify(State2::new(0.0, 0.0), p)?, classify(State2::new(p.a1 / p.b1, 0.0), p)?];

    if p.q == 1.0 {
        points.push(classify(State2::new(0.0, p.a2 / p.b2), p)?);
        if let Some(e) = model::classical_coexistence(p) {
            points.push(classify(e, p)?);
        }
        let interior_count = points.iter().filter(|x| x.kind == EquilibriumKind::Interior).count();
        return Ok(EquilibriumReport {
            params: *p,
            points,
            v_phi: None,
            v_max: None,
            phi_at_vmax: None,
            interior_count,
            boundary_v_count: 1,
            warnings,
        });
    }

    let boundary = boundary_roots(p)?;
    let boundary_v_count = boundary.len();
    for r in &boundary {
        let pt = classify(State2::new(0.0, r.v), p)?;
        points.push(force_nonhyperbolic(pt, r.tangent));
    }
    let interior = interior_with_flags(p, &mut warnings)?;
    let interior_count = interior.len();
    for (s, tangent) in interior {
        let pt = classify(s, p)?;
        points.push(force_nonhyperbolic(pt, tangent));
    }
    let (v_phi_val, v_max_val) = if p.p < 1.0 {
        (Some(v_phi(p)?), v_max(p).ok())
    } else {
        (None, None)
    };
    let phi_at_vmax = match v_max_val {
        Some(vm) => Some(phi(vm, p)?),
        None => None,
    };
    Ok(EquilibriumReport {
        params: *p,
        points,
        v_phi: v_phi_val,
        v_max: v_max_val,
        phi_at_vmax,
        interior_count,
        boundary_v_count,
        warnings,
    })
}
