//! Parameter/state types and right-hand sides of the classical and the
//! harvested competition systems.

use serde::{Deserialize, Serialize};

use crate::error::{FtemError, Result};
use crate::linalg::Mat2;

/// Relative tolerance for ties in the classical regime tests.
pub const REGIME_TOL: f64 = 1e-10;

/// The eight scalars of the harvested competition model.
///
/// `q = 1` switches the harvesting term off and recovers the classical
/// Lotka–Volterra competition system regardless of `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompetitionParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub p: f64,
    pub q: f64,
}

impl CompetitionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(a1: f64, a2: f64, b1: f64, b2: f64, c1: f64, c2: f64, p: f64, q: f64) -> Result<Self> {
        let params = CompetitionParams { a1, a2, b1, b2, c1, c2, p, q };
        params.validate()?;
        Ok(params)
    }

    /// Classical system (`q = 1`); `p` is irrelevant and set to 1.
    pub fn classical(a1: f64, a2: f64, b1: f64, b2: f64, c1: f64, c2: f64) -> Result<Self> {
        Self::new(a1, a2, b1, b2, c1, c2, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("a1", self.a1),
            ("a2", self.a2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return Err(FtemError::InvalidParams(format!("{name} must be positive and finite, got {x}")));
            }
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(FtemError::InvalidParams(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(FtemError::InvalidParams(format!("q must lie in (0, 1], got {}", self.q)));
        }
        Ok(())
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn is_classical(&self) -> bool {
        self.q == 1.0
    }

    /// `b1 b2 - c1 c2`; positive means weak interspecific competition.
    pub fn competition_margin(&self) -> f64 {
        self.b1 * self.b2 - self.c1 * self.c2
    }

    /// Upper corner of the invariant rectangle `[0, a1/b1] x [0, a2/b2]`.
    pub fn gamma(&self) -> (f64, f64) {
        (self.a1 / self.b1, self.a2 / self.b2)
    }
}

/// Densities of the two competitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State2 {
    pub u: f64,
    pub v: f64,
}

impl State2 {
    pub const fn new(u: f64, v: f64) -> Self {
        State2 { u, v }
    }

    pub fn norm(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn dist(&self, other: &State2) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.u, self.v]
    }
}

impl From<[f64; 2]> for State2 {
    fn from(a: [f64; 2]) -> Self {
        State2 { u: a[0], v: a[1] }
    }
}

/// Long-term outcome class of the classical system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    UExcludesV,
    VExcludesU,
    WeakCoexistence,
    StrongBistable,
    Degenerate,
}

/// `x^p` with the continuous extension `0^p = 0`.
#[inline]
pub(crate) fn pow0(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

pub fn rhs_classical(s: State2, p: &CompetitionParams) -> State2 {
    let State2 { u, v } = s;
    State2 {
        u: p.a1 * u - p.b1 * u * u - p.c1 * u * v,
        v: p.a2 * v - p.b2 * v * v - p.c2 * u * v,
    }
}

/// Right-hand side of the harvested system.
///
/// Negative densities are rejected: `v^p` has no real value for `v < 0`,
/// and keeping states nonnegative is the integrator's job.
pub fn rhs_modified(s: State2, p: &CompetitionParams) -> Result<State2> {
    let State2 { u, v } = s;
    if u < 0.0 || v < 0.0 || !u.is_finite() || !v.is_finite() {
        return Err(FtemError::Domain(format!("negative or non-finite state ({u}, {v})")));
    }
    if p.q == 1.0 {
        return Ok(rhs_classical(s, p));
    }
    Ok(State2 {
        u: p.a1 * u - p.b1 * u * u - p.c1 * u * v,
        v: p.a2 * p.q * v - p.b2 * v * v - p.c2 * u * v - (1.0 - p.q) * pow0(v, p.p),
    })
}

pub fn jacobian_classical(s: State2, p: &CompetitionParams) -> Mat2 {
    let State2 { u, v } = s;
    Mat2::new(
        p.a1 - 2.0 * p.b1 * u - p.c1 * v,
        -p.c1 * u,
        -p.c2 * v,
        p.a2 - 2.0 * p.b2 * v - p.c2 * u,
    )
}

pub fn jacobian_modified(s: State2, p: &CompetitionParams) -> Result<Mat2> {
    if p.q == 1.0 {
        return Ok(jacobian_classical(s, p));
    }
    let State2 { u, v } = s;
    if v < 0.0 || u < 0.0 {
        return Err(FtemError::Domain(format!("negative state ({u}, {v})")));
    }
    if v == 0.0 && p.p < 1.0 {
        return Err(FtemError::SingularJacobian);
    }
    let harvest = if p.p == 1.0 { 1.0 - p.q } else { p.p * (1.0 - p.q) * v.powf(p.p - 1.0) };
    Ok(Mat2::new(
        p.a1 - 2.0 * p.b1 * u - p.c1 * v,
        -p.c1 * u,
        -p.c2 * v,
        p.a2 * p.q - 2.0 * p.b2 * v - p.c2 * u - harvest,
    ))
}

/// Classify the classical (`q = 1`) system by the textbook inequality tests.
pub fn classify_classical_regime(p: &CompetitionParams) -> Result<Regime> {
    if p.q != 1.0 {
        return Err(FtemError::InvalidParams(format!(
            "classical regime classification needs q = 1, got {}",
            p.q
        )));
    }
    let ratio = p.a1 / p.a2;
    let t1 = p.b1 / p.c2;
    let t2 = p.c1 / p.b2;
    let close = |x: f64, y: f64| (x - y).abs() <= REGIME_TOL * x.abs().max(y.abs());
    if close(ratio, t1) || close(ratio, t2) || close(p.b1 * p.b2, p.c1 * p.c2) {
        return Ok(Regime::Degenerate);
    }
    let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
    Ok(if ratio > hi {
        Regime::UExcludesV
    } else if ratio < lo {
        Regime::VExcludesU
    } else if p.competition_margin() > 0.0 {
        Regime::WeakCoexistence
    } else {
        Regime::StrongBistable
    })
}

/// Interior equilibrium of the classical system, if it is positive.
pub fn classical_coexistence(p: &CompetitionParams) -> Option<State2> {
    let det = p.competition_margin();
    if det == 0.0 {
        return None;
    }
    let u = (p.a1 * p.b2 - p.a2 * p.c1) / det;
    let v = (p.a2 * p.b1 - p.a1 * p.c2) / det;
    (u > 0.0 && v > 0.0).then_some(State2 { u, v })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones() -> CompetitionParams {
        CompetitionParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn classical_rhs_examples() {
        let p = ones();
        assert_eq!(rhs_classical(State2::new(0.0, 0.0), &p), State2::new(0.0, 0.0));
        assert_eq!(rhs_classical(State2::new(1.0, 1.0), &p), State2::new(-1.0, -1.0));
        let p = CompetitionParams::classical(0.4, 0.7, 1.3, 1.0, 0.6, 0.8).unwrap();
        let e_u = State2::new(p.a1 / p.b1, 0.0);
        let r = rhs_classical(e_u, &p);
        assert!(r.u.abs() < 1e-16 && r.v == 0.0);
    }

    #[test]
    fn modified_rhs_origin_and_reduction() {
        let p = CompetitionParams::new(0.4, 0.6, 1.0, 0.6, 0.3, 0.8, 0.6, 0.93).unwrap();
        assert_eq!(rhs_modified(State2::new(0.0, 0.0), &p).unwrap(), State2::new(0.0, 0.0));
        let pc = p.with_q(1.0);
        let s = State2::new(0.123, 0.456);
        assert_eq!(rhs_modified(s, &pc).unwrap(), rhs_classical(s, &pc));
    }

    #[test]
    fn modified_rhs_hand_value() {
        // 0.6*0.93*1 - 0.6*1 - 0 - 0.07*1 = -0.112
        let p = CompetitionParams::new(0.4, 0.6, 1.0, 0.6, 0.3, 0.8, 0.6, 0.93).unwrap();
        let r = rhs_modified(State2::new(0.0, 1.0), &p).unwrap();
        assert!((r.v - (-0.112)).abs() < 1e-15, "{}", r.v);
    }

    #[test]
    fn modified_rhs_rejects_negative() {
        let p = CompetitionParams::new(0.4, 0.6, 1.0, 0.6, 0.3, 0.8, 0.6, 0.93).unwrap();
        assert!(matches!(rhs_modified(State2::new(0.1, -1e-12), &p), Err(FtemError::Domain(_))));
    }

    #[test]
    fn jacobian_examples() {
        let j = jacobian_modified(State2::new(1.0, 1.0), &ones()).unwrap();
        assert_eq!(j, Mat2::new(-2.0, -1.0, -1.0, -2.0));
        let p = CompetitionParams::new(0.4, 0.6, 1.0, 0.6, 0.3, 0.8, 0.6, 1.0).unwrap();
        let ev = jacobian_modified(State2::new(0.0, 0.0), &p).unwrap().eigenvalues();
        assert_eq!((ev[0].re, ev[1].re), (0.4, 0.6));
        let ph = p.with_q(0.9);
        assert_eq!(jacobian_modified(State2::new(0.4, 0.0), &ph), Err(FtemError::SingularJacobian));
    }

    #[test]
    fn regime_examples() {
        let ce = CompetitionParams::classical(0.4, 0.7, 1.0, 1.0, 0.6, 0.8).unwrap();
        assert_eq!(classify_classical_regime(&ce).unwrap(), Regime::VExcludesU);
        let weak = CompetitionParams::classical(0.4, 0.6, 1.0, 0.7, 0.4, 0.6).unwrap();
        assert_eq!(classify_classical_regime(&weak).unwrap(), Regime::WeakCoexistence);
        let sym = CompetitionParams::classical(1.0, 1.0, 1.0, 1.0, 0.5, 0.5).unwrap();
        assert_eq!(classify_classical_regime(&sym).unwrap(), Regime::WeakCoexistence);
        let e = classical_coexistence(&sym).unwrap();
        assert!((e.u - 2.0 / 3.0).abs() < 1e-15 && (e.v - 2.0 / 3.0).abs() < 1e-15);
        let strong = CompetitionParams::classical(1.0, 1.0, 1.0, 1.0, 2.0, 2.0).unwrap();
        assert_eq!(classify_classical_regime(&strong).unwrap(), Regime::StrongBistable);
        let u_wins = CompetitionParams::classical(1.0, 0.3, 1.0, 1.0, 0.5, 0.5).unwrap();
        assert_eq!(classify_classical_regime(&u_wins).unwrap(), Regime::UExcludesV);
        // a1/a2 == c1/b2 exactly
        let tie = CompetitionParams::classical(0.6, 1.0, 1.0, 1.0, 0.6, 0.5).unwrap();
        assert_eq!(classify_classical_regime(&tie).unwrap(), Regime::Degenerate);
    }

    #[test]
    fn regime_rejects_harvested() {
        let p = CompetitionParams::new(0.4, 0.7, 1.0, 1.0, 0.6, 0.8, 0.6, 0.91).unwrap();
        assert!(classify_classical_regime(&p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(CompetitionParams::new(0.4, 0.7, 1.0, 1.0, 0.6, 0.8, 1.5, 0.9).is_err());
        assert!(CompetitionParams::new(0.4, 0.7, 1.0, 1.0, 0.6, 0.8, 0.6, 0.0).is_err());
        assert!(CompetitionParams::new(-0.4, 0.7, 1.0, 1.0, 0.6, 0.8, 0.6, 0.5).is_err());
    }
}
