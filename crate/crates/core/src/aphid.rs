//! Two-biotype aphid model (avirulent `x_A`, virulent `x_V`) on a resistant
//! host with cumulative density `h` and dynamic resistance threshold `A`:
//!
//! ```text
//! h'   = a (x_A + x_V)
//! x_A' = (r q - h)(x_A - A) - (1 - q) x_A^p
//! x_V' = (r - h) x_V
//! A'   = -(k_r x_V + k_f x_V + q k_f sgn(x_A - R) x_A) A
//! ```
//!
//! with `sgn(x) = 1` for `x > 0` and `0` otherwise. `q = 1` is the classic
//! model.

use serde::{Deserialize, Serialize};

use crate::error::{FtemError, Result};
use crate::integrator::{self, Flow, Problem, StepControl, Trial};
use crate::model::pow0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AphidParams {
    pub r: f64,
    pub a: f64,
    pub k_f: f64,
    pub k_r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub p: f64,
    pub q: f64,
}

impl AphidParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("r", self.r), ("a", self.a), ("k_f", self.k_f), ("k_r", self.k_r), ("R", self.big_r)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(FtemError::InvalidParams(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.k_r > self.k_f) {
            return Err(FtemError::InvalidParams(format!("need k_r > k_f, got {} <= {}", self.k_r, self.k_f)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(FtemError::InvalidParams(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(FtemError::InvalidParams(format!("q must lie in (0, 1], got {}", self.q)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AphidState {
    pub h: f64,
    pub x_a: f64,
    pub x_v: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
}

impl AphidState {
    pub const fn new(h: f64, x_a: f64, x_v: f64, big_a: f64) -> Self {
        AphidState { h, x_a, x_v, big_a }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.h, self.x_a, self.x_v, self.big_a]
    }

    pub fn from_array(y: [f64; 4]) -> Self {
        AphidState::new(y[0], y[1], y[2], y[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AphidModel {
    Classic,
    Harvested,
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn field(s: &AphidState, p: &AphidParams, q: f64, switch: f64) -> [f64; 4] {
    let AphidState { h, x_a, x_v, big_a } = *s;
    let harvest = if q < 1.0 { (1.0 - q) * pow0(x_a, p.p) } else { 0.0 };
    [
        p.a * (x_a + x_v),
        (p.r * q - h) * (x_a - big_a) - harvest,
        (p.r - h) * x_v,
        -(p.k_r * x_v + p.k_f * x_v + q * p.k_f * switch * x_a) * big_a,
    ]
}

pub fn rhs_classic(s: &AphidState, p: &AphidParams) -> AphidState {
    AphidState::from_array(field(s, p, 1.0, sgn(s.x_a - p.big_r)))
}

pub fn rhs_harvested(s: &AphidState, p: &AphidParams) -> Result<AphidState> {
    if s.x_a < 0.0 {
        return Err(FtemError::Domain(format!("x_A = {} is negative", s.x_a)));
    }
    Ok(AphidState::from_array(field(s, p, p.q, sgn(s.x_a - p.big_r))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AphidEvent {
    /// `x_A` pinned to 0; `pre_value` is the value just before.
    Extinction { t: f64, pre_value: f64 },
    /// `sgn(x_A - R)` switched; `x_a` is where the switch was localized.
    Switch { t: f64, x_a: f64, above: bool },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AphidTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<AphidState>,
    pub events: Vec<AphidEvent>,
}

impl AphidTrajectory {
    pub fn extinction_time(&self) -> Option<f64> {
        self.events.iter().find_map(|e| match e {
            AphidEvent::Extinction { t, .. } => Some(*t),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AphidOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub extinction_threshold: f64,
    /// Band half-width around `R` within which a switch is accepted.
    pub switch_tol: f64,
}

impl Default for AphidOptions {
    fn default() -> Self {
        AphidOptions { rel_tol: 1e-9, abs_tol: 1e-12, max_step: 0.1, extinction_threshold: 1e-10, switch_tol: 1e-8 }
    }
}

struct Aphid<'a> {
    p: &'a AphidParams,
    q: f64,
    above: bool,
    dead: bool,
    /// Last accepted `A`; `A' <= 0`, so no step may raise it.
    a_ceiling: f64,
    opts: AphidOptions,
    events: Vec<AphidEvent>,
}

impl Aphid<'_> {
    fn eval(&self, y: &[f64; 4]) -> [f64; 4] {
        let mut d = field(&AphidState::from_array(*y), self.p, self.q, if self.above { 1.0 } else { 0.0 });
        if self.dead {
            d[1] = 0.0;
        }
        d
    }
}

impl Problem<4> for Aphid<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
        if y.iter().any(|x| !x.is_finite()) {
            return Err(FtemError::Domain("non-finite state".into()));
        }
        if y[1] < 0.0 && self.q < 1.0 {
            return Err(FtemError::Domain(format!("x_A = {} is negative", y[1])));
        }
        Ok(self.eval(y))
    }

    fn check_trial(&mut self, _t: f64, y: &[f64; 4], h: f64, y_new: &[f64; 4]) -> Trial {
        let (x0, x1) = (y[1], y_new[1]);
        let delta = self.opts.extinction_threshold;
        if !self.dead && x1 < 0.0 {
            // aim for the middle of [0, delta)
            let frac = (x0 - 0.5 * delta) / (x0 - x1);
            return Trial::Retry(h * frac.clamp(0.01, 0.99));
        }
        let (r, tol) = (self.p.big_r, self.opts.switch_tol);
        let overshoot = if self.above { x1 < r - tol } else { x1 > r + tol };
        if !self.dead && overshoot {
            let frac = (r - x0) / (x1 - x0);
            return Trial::Retry(h * frac.clamp(0.01, 0.99));
        }
        Trial::Accept
    }

    fn after_step(&mut self, t: f64, y: &mut [f64; 4]) -> Result<Flow> {
        // stiff decay of A leaves roundoff-level oscillations below abs_tol
        let projected = !(0.0..=self.a_ceiling).contains(&y[3]);
        if projected {
            y[3] = y[3].clamp(0.0, self.a_ceiling);
        }
        self.a_ceiling = y[3];
        match self.pin_or_switch(t, y) {
            Flow::Continue if projected => Ok(Flow::Modified),
            flow => Ok(flow),
        }
    }
}

impl Aphid<'_> {
    fn pin_or_switch(&mut self, t: f64, y: &mut [f64; 4]) -> Flow {
        if self.dead {
            return Flow::Continue;
        }
        let delta = self.opts.extinction_threshold;
        let x = y[1];
        if x < delta {
            let mut at = *y;
            at[1] = delta;
            if self.eval(&at)[1] < 0.0 {
                self.events.push(AphidEvent::Extinction { t, pre_value: x });
                self.dead = true;
                self.above = false;
                y[1] = 0.0;
                return Flow::Modified;
            }
        }
        let r = self.p.big_r;
        if (x - r).abs() <= self.opts.switch_tol {
            let rising = self.eval(y)[1] > 0.0;
            if rising != self.above {
                self.above = rising;
                self.events.push(AphidEvent::Switch { t, x_a: x, above: rising });
                return Flow::Modified;
            }
        }
        Flow::Continue
    }
}

/// Integrate either model from `s0` over `[0, t_end]`.
pub fn simulate(
    p: &AphidParams,
    s0: AphidState,
    t_end: f64,
    model: AphidModel,
    opts: &AphidOptions,
) -> Result<AphidTrajectory> {
    p.validate()?;
    if s0.as_array().iter().any(|x| !(*x >= 0.0)) {
        return Err(FtemError::InvalidParams("initial aphid state must be nonnegative".into()));
    }
    if !(t_end > 0.0) {
        return Err(FtemError::InvalidParams("t_end must be positive".into()));
    }
    let q = match model {
        AphidModel::Classic => 1.0,
        AphidModel::Harvested => p.q,
    };
    let mut prob = Aphid { p, q, above: s0.x_a > p.big_r, dead: false, a_ceiling: s0.big_a, opts: *opts, events: vec![] };
    let ctl = StepControl { rel_tol: opts.rel_tol, abs_tol: opts.abs_tol, max_step: opts.max_step, ..Default::default() };
    let mut traj = AphidTrajectory::default();
    // a start already below the extinction threshold is pinned before the first step
    let mut y0 = s0.as_array();
    prob.after_step(0.0, &mut y0)?;
    integrator::integrate(&mut prob, 0.0, y0, t_end, &ctl, |t, y| {
        traj.times.push(t);
        traj.states.push(AphidState::from_array(*y));
    })?;
    traj.events = prob.events;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub value: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakMetrics {
    pub x_a: Peak,
    pub x_v: Peak,
}

/// Maximum of a sampled series, refined by the parabola through the
/// sample at the maximum and its two neighbours.
pub fn peak(times: &[f64], values: &[f64]) -> Option<Peak> {
    let (i, _) = values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &y)| match best {
            Some((_, b)) if b >= y => best,
            _ => Some((i, y)),
        })?;
    let sample = Peak { value: values[i], time: times[i] };
    if i == 0 || i + 1 >= values.len() {
        return Some(sample);
    }
    let (t0, t1, t2) = (times[i - 1], times[i], times[i + 1]);
    let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
    // divided differences of the interpolating quadratic
    let d01 = (y1 - y0) / (t1 - t0);
    let d12 = (y2 - y1) / (t2 - t1);
    let c2 = (d12 - d01) / (t2 - t0);
    if !(c2 < 0.0) {
        return Some(sample);
    }
    let c1 = d01 - c2 * (t0 + t1);
    let tv = -c1 / (2.0 * c2);
    if !(tv > t0 && tv < t2) {
        return Some(sample);
    }
    let value = y0 + d01 * (tv - t0) + c2 * (tv - t0) * (tv - t1);
    Some(Peak { value: value.max(sample.value), time: tv })
}

pub fn peak_metrics(traj: &AphidTrajectory) -> Result<PeakMetrics> {
    let xa: Vec<f64> = traj.states.iter().map(|s| s.x_a).collect();
    let xv: Vec<f64> = traj.states.iter().map(|s| s.x_v).collect();
    let empty = || FtemError::InvalidParams("empty trajectory".into());
    Ok(PeakMetrics {
        x_a: peak(&traj.times, &xa).ok_or_else(empty)?,
        x_v: peak(&traj.times, &xv).ok_or_else(empty)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(q: f64) -> AphidParams {
        AphidParams { r: 0.27, a: 5e-6, k_f: 0.001, k_r: 0.01, big_r: 30.0, p: 0.6, q }
    }

    #[test]
    fn empty_field_is_at_rest() {
        let d = rhs_classic(&AphidState::new(0.0, 0.0, 0.0, 30.0), &params(1.0));
        assert_eq!(d.h, 0.0);
        assert_eq!(d.x_v, 0.0);
        assert_eq!(d.big_a, 0.0);
    }

    #[test]
    fn no_facilitation_below_threshold() {
        let d = rhs_classic(&AphidState::new(0.0, 15.0, 0.0, 30.0), &params(1.0));
        assert_eq!(d.big_a, 0.0);
        let d = rhs_classic(&AphidState::new(0.0, 30.0, 0.0, 30.0), &params(1.0));
        assert_eq!(d.big_a, 0.0);
        let d = rhs_classic(&AphidState::new(0.0, 15.0, 1.0, 30.0), &params(1.0));
        assert!(d.big_a < 0.0);
    }

    #[test]
    fn harvested_reduces_to_classic() {
        let s = AphidState::new(0.1, 40.0, 3.0, 20.0);
        assert_eq!(rhs_harvested(&s, &params(1.0)).unwrap(), rhs_classic(&s, &params(1.0)));
        assert!(rhs_harvested(&AphidState::new(0.0, -1.0, 0.0, 1.0), &params(0.9)).is_err());
    }

    #[test]
    fn hand_evaluated_derivative() {
        let p = params(0.95);
        let s = AphidState::new(0.0, 15.0, 20.0, 30.0);
        let d = rhs_harvested(&s, &p).unwrap();
        assert!((d.h - 5e-6 * 35.0).abs() < 1e-18);
        let xa = (0.27 * 0.95) * (15.0 - 30.0) - 0.05 * 15f64.powf(0.6);
        assert!((d.x_a - xa).abs() < 1e-12);
        assert!((d.x_v - 0.27 * 20.0).abs() < 1e-12);
        assert!((d.big_a - (-(0.01 * 20.0 + 0.001 * 20.0) * 30.0)).abs() < 1e-12);
    }

    #[test]
    fn peak_refinement() {
        // y = 1 - (t - 0.537)^2 sampled every 0.1
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 1.0 - (t - 0.537) * (t - 0.537)).collect();
        let pk = peak(&t, &y).unwrap();
        assert!((pk.time - 0.537).abs() < 1e-12 && (pk.value - 1.0).abs() < 1e-12);
        let dec: Vec<f64> = t.iter().map(|t| -t).collect();
        assert_eq!(peak(&t, &dec).unwrap().time, 0.0);
        assert!(peak(&[], &[]).is_none());
    }

    #[test]
    fn invariants_along_trajectory() {
        for model in [AphidModel::Classic, AphidModel::Harvested] {
            let tr = simulate(&params(0.95), AphidState::new(0.0, 50.0, 5.0, 30.0), 120.0, model, &Default::default())
                .unwrap();
            for w in tr.states.windows(2) {
                assert!(w[1].h >= w[0].h);
                assert!(w[1].big_a <= w[0].big_a);
                assert!(w[1].x_a >= 0.0 && w[1].x_v >= 0.0 && w[1].big_a >= 0.0);
            }
            for e in &tr.events {
                if let AphidEvent::Switch { x_a, .. } = e {
                    assert!((x_a - 30.0).abs() <= AphidOptions::default().switch_tol);
                }
            }
        }
    }

    #[test]
    fn single_biotype_boom_bust() {
        let tr = simulate(&params(1.0), AphidState::new(0.0, 40.0, 0.0, 30.0), 120.0, AphidModel::Classic, &Default::default())
            .unwrap();
        let pk = peak_metrics(&tr).unwrap();
        assert!(pk.x_a.time > 0.0 && pk.x_a.time < 120.0);
        assert!(tr.states.last().unwrap().x_a < pk.x_a.value);
    }
}
