//! Trajectories of the competition system with finite-time extinction
//! events, stable-manifold separatrices and phase-portrait data.

use serde::{Deserialize, Serialize};

use crate::equilibria::{self, EquilibriumReport, Stability};
use crate::error::{FtemError, Result};
use crate::integrator::{self, Flow, Problem, StepControl};
use crate::model::{self, pow0, CompetitionParams, State2};

/// Default extinction threshold (density units).
pub const EXTINCTION_DELTA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    U,
    V,
}

impl Species {
    pub fn as_str(self) -> &'static str {
        match self {
            Species::U => "u",
            Species::V => "v",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionEvent {
    pub t: f64,
    pub species: Species,
    /// Value of the component just before it was pinned to 0.
    pub pre_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State2>,
    pub events: Vec<ExtinctionEvent>,
}

impl Trajectory {
    pub fn last(&self) -> Option<State2> {
        self.states.last().copied()
    }

    pub fn extinction_time(&self, species: Species) -> Option<f64> {
        self.events.iter().find(|e| e.species == species).map(|e| e.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub extinction_threshold: f64,
    pub max_step: f64,
    pub t_end: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            extinction_threshold: EXTINCTION_DELTA,
            max_step: 1.0,
            t_end: 500.0,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(FtemError::InvalidParams("tolerances must be positive".into()));
        }
        if !(self.extinction_threshold > 0.0) {
            return Err(FtemError::InvalidParams("extinction threshold must be positive".into()));
        }
        if !(self.max_step > 0.0 && self.t_end > 0.0) {
            return Err(FtemError::InvalidParams("max_step and t_end must be positive".into()));
        }
        Ok(())
    }

    fn control(&self) -> StepControl {
        StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            ..StepControl::default()
        }
    }
}

struct Harvested<'a> {
    p: &'a CompetitionParams,
    delta: f64,
    v_dead: bool,
    events: Vec<ExtinctionEvent>,
}

impl Harvested<'_> {
    fn pins(&self) -> bool {
        self.p.q < 1.0 && self.p.p < 1.0
    }
}

impl Problem<2> for Harvested<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 2]) -> Result<[f64; 2]> {
        let mut d = model::rhs_modified(State2::new(y[0], y[1]), self.p)?.as_array();
        if self.v_dead {
            d[1] = 0.0;
        }
        Ok(d)
    }

    fn after_step(&mut self, t: f64, y: &mut [f64; 2]) -> Result<Flow> {
        if self.v_dead || !self.pins() {
            return Ok(Flow::Continue);
        }
        let v = y[1];
        if v > 0.0 && v < self.delta {
            // drift of v evaluated at the threshold
            let p = self.p;
            let d = self.delta;
            let drift = p.a2 * p.q * d - p.b2 * d * d - p.c2 * y[0] * d - (1.0 - p.q) * pow0(d, p.p);
            if drift < 0.0 {
                self.events.push(ExtinctionEvent { t, species: Species::V, pre_value: v });
                self.v_dead = true;
                y[1] = 0.0;
                return Ok(Flow::Modified);
            }
        }
        Ok(Flow::Continue)
    }
}

/// Integrate the harvested system (the classical one when `q = 1`) from `s0`.
pub fn integrate(p: &CompetitionParams, s0: State2, opts: &IntegratorOptions) -> Result<Trajectory> {
    p.validate()?;
    opts.validate()?;
    if !(s0.u >= 0.0 && s0.v >= 0.0) {
        return Err(FtemError::InvalidParams(format!("initial state ({}, {}) is not nonnegative", s0.u, s0.v)));
    }
    let mut prob = Harvested { p, delta: opts.extinction_threshold, v_dead: s0.v == 0.0, events: vec![] };
    let mut traj = Trajectory::default();
    integrator::integrate(&mut prob, 0.0, s0.as_array(), opts.t_end, &opts.control(), |t, y| {
        traj.times.push(t);
        traj.states.push(State2::new(y[0], y[1]));
    })?;
    traj.events = prob.events;
    Ok(traj)
}

/// Reversed vector field used to trace stable manifolds.
struct Backward<'a> {
    p: &'a CompetitionParams,
    bounds: (f64, f64, f64, f64),
    arc_len: f64,
    travelled: f64,
    last: [f64; 2],
}

impl Problem<2> for Backward<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 2]) -> Result<[f64; 2]> {
        // outside the positive quadrant the harvesting power is undefined;
        // use the odd extension so the branch can be traced up to the exit
        let (u, v) = (y[0], y[1]);
        let p = self.p;
        let harvest = if p.q < 1.0 { (1.0 - p.q) * v.signum() * pow0(v.abs(), p.p) } else { 0.0 };
        let du = p.a1 * u - p.b1 * u * u - p.c1 * u * v;
        let dv = p.a2 * p.q * v - p.b2 * v * v - p.c2 * u * v - harvest;
        Ok([-du, -dv])
    }

    fn after_step(&mut self, _t: f64, y: &mut [f64; 2]) -> Result<Flow> {
        self.travelled += (y[0] - self.last[0]).hypot(y[1] - self.last[1]);
        self.last = *y;
        let (u0, u1, v0, v1) = self.bounds;
        let outside = y[0] < u0 || y[0] > u1 || y[1] < v0 || y[1] > v1;
        if outside || self.travelled >= self.arc_len {
            return Ok(Flow::Stop);
        }
        Ok(Flow::Continue)
    }
}

/// Half-width of the separatrix seed offset relative to the size of Γ.
const SEPARATRIX_EPS: f64 = 1e-6;

/// Stable manifold of a saddle as one polyline ordered from one end through
/// the saddle to the other end.
pub fn separatrix(p: &CompetitionParams, saddle: State2, arc_len: f64) -> Result<Vec<State2>> {
    p.validate()?;
    let j = model::jacobian_modified(saddle, p)?;
    let ev = j.eigenvalues();
    if ev.iter().any(|l| l.im != 0.0) || !(ev[0].re < 0.0 && ev[1].re > 0.0) {
        return Err(FtemError::NoStableDirection(format!(
            "eigenvalues {:?} are not a real saddle pair",
            ev.iter().map(|l| (l.re, l.im)).collect::<Vec<_>>()
        )));
    }
    let e = j.real_eigenvector(ev[0].re);
    let (gu, gv) = p.gamma();
    let scale = gu.hypot(gv);
    let eps = SEPARATRIX_EPS * scale;
    let bounds = (-0.05 * gu, 1.05 * gu, -0.05 * gv, 1.05 * gv);
    let ctl = StepControl { rel_tol: 1e-10, abs_tol: 1e-13, max_step: 0.05 * scale, max_steps: 200_000 };
    // backward time in which the branch must leave Γ; generous multiple of
    // the unstable time scale
    let horizon = 200.0 / ev[0].re.abs().min(ev[1].re.abs()).max(1e-6);
    let branch = |sign: f64| -> Result<Vec<State2>> {
        let start = [saddle.u + sign * eps * e[0], saddle.v + sign * eps * e[1]];
        let mut prob = Backward { p, bounds, arc_len, travelled: 0.0, last: start };
        let mut pts = Vec::new();
        integrator::integrate(&mut prob, 0.0, start, horizon, &ctl, |_, y| pts.push(State2::new(y[0], y[1])))?;
        Ok(pts)
    };
    let mut minus = branch(-1.0)?;
    let plus = branch(1.0)?;
    minus.reverse();
    minus.push(saddle);
    minus.extend(plus);
    Ok(minus)
}

/// Signed side of `s` relative to a polyline: the sign of the cross product
/// with the nearest segment. Returns the distance to the polyline as well.
pub fn side_of_polyline(line: &[State2], s: State2) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (dx, dy) = (b.u - a.u, b.v - a.v);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            continue;
        }
        let t = (((s.u - a.u) * dx + (s.v - a.v) * dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (a.u + t * dx, a.v + t * dy);
        let d = (s.u - px).hypot(s.v - py);
        if d < best.0 {
            let cross = dx * (s.v - a.v) - dy * (s.u - a.u);
            best = (d, cross.signum());
        }
    }
    (best.1, best.0)
}

/// Sub-rectangle of Γ and sampling density for a phase portrait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub samples: usize,
}

impl GridSpec {
    pub fn full(p: &CompetitionParams, samples: usize) -> Self {
        let (gu, gv) = p.gamma();
        GridSpec { u_min: 0.0, u_max: gu, v_min: 0.0, v_max: gv, samples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePortrait {
    pub u_nullcline: Vec<State2>,
    /// Non-trivial branch of the v-nullcline; `u` solved at each sampled `v`.
    pub v_nullcline: Vec<State2>,
    pub equilibria: EquilibriumReport,
    pub separatrix: Option<Vec<State2>>,
    pub trajectories: Vec<Trajectory>,
}

/// `u` on the non-trivial v-nullcline at height `v > 0`.
pub fn v_nullcline_u(v: f64, p: &CompetitionParams) -> f64 {
    let harvest = if p.q < 1.0 { (1.0 - p.q) * v.powf(p.p - 1.0) } else { 0.0 };
    (p.a2 * p.q - p.b2 * v - harvest) / p.c2
}

pub fn phase_portrait(p: &CompetitionParams, grid: &GridSpec, opts: &IntegratorOptions) -> Result<PhasePortrait> {
    p.validate()?;
    let n = grid.samples.max(2);
    let mut u_nullcline = Vec::with_capacity(n);
    let mut v_nullcline = Vec::with_capacity(n);
    for i in 0..n {
        let s = i as f64 / (n - 1) as f64;
        let u = grid.u_min + s * (grid.u_max - grid.u_min);
        u_nullcline.push(State2::new(u, (p.a1 - p.b1 * u) / p.c1));
        let v = grid.v_min + s * (grid.v_max - grid.v_min);
        if v > 0.0 {
            v_nullcline.push(State2::new(v_nullcline_u(v, p), v));
        }
    }
    let equilibria = equilibria::full_report(p)?;
    let separatrix = match equilibria.interior().find(|e| e.stability == Stability::Saddle) {
        Some(s) => {
            let (gu, gv) = p.gamma();
            Some(separatrix(p, s.location, 4.0 * (gu + gv))?)
        }
        None => None,
    };
    let corners = [
        State2::new(grid.u_min, grid.v_min),
        State2::new(grid.u_max, grid.v_min),
        State2::new(grid.u_min, grid.v_max),
        State2::new(grid.u_max, grid.v_max),
    ];
    let mut trajectories = Vec::new();
    for c in corners {
        if c.u > 0.0 || c.v > 0.0 {
            trajectories.push(integrate(p, c, opts)?);
        }
    }
    Ok(PhasePortrait { u_nullcline, v_nullcline, equilibria, separatrix, trajectories })
}
