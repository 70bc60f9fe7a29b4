//! Adaptive Dormand–Prince 5(4) integrator with hooks for positivity,
//! switching-surface localization and state pinning.
//!
//! The driver is generic over a [`Problem`]: besides the right-hand side a
//! problem may veto a trial step (asking for a smaller one) and may edit the
//! state after an accepted step. Trial stages whose right-hand side is
//! undefined (a [`FtemError::Domain`] error, e.g. a negative density under a
//! fractional power) are treated as rejected steps.

use crate::error::{FtemError, Result};

// Dormand–Prince coefficients
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// 5th order weights (propagated solution)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// 5th minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rel_tol: 1e-8, abs_tol: 1e-12, max_step: f64::INFINITY, max_steps: 5_000_000 }
    }
}

/// Verdict on a trial step that passed the error test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trial {
    Accept,
    /// Redo the step with this (smaller) size.
    Retry(f64),
}

/// What happened after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    /// The state was edited in place; derivatives must be re-evaluated.
    Modified,
    Stop,
}

pub trait Problem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> Result<[f64; N]>;

    fn check_trial(&mut self, _t: f64, _y: &[f64; N], _h: f64, _y_new: &[f64; N]) -> Trial {
        Trial::Accept
    }

    fn after_step(&mut self, _t: f64, _y: &mut [f64; N]) -> Result<Flow> {
        Ok(Flow::Continue)
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn is_domain(e: &FtemError) -> bool {
    matches!(e, FtemError::Domain(_))
}

fn weighted_rms<const N: usize>(x: &[f64; N], y: &[f64; N], ctl: &StepControl) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sc = ctl.abs_tol + ctl.rel_tol * y[i].abs();
        s += (x[i] / sc) * (x[i] / sc);
    }
    (s / N as f64).sqrt()
}

/// Outcome of a call to [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finish<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub steps: usize,
    pub rejected: usize,
    /// True when the problem requested an early stop.
    pub stopped: bool,
}

/// Integrate `prob` from `(t0, y0)` to `t_end`, calling `observe` with every
/// accepted state (including the initial one).
pub fn integrate<P, const N: usize>(
    prob: &mut P,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    ctl: &StepControl,
    mut observe: impl FnMut(f64, &[f64; N]),
) -> Result<Finish<N>>
where
    P: Problem<N>,
{
    if !(t_end >= t0) {
        return Err(FtemError::InvalidParams(format!("t_end {t_end} precedes t0 {t0}")));
    }
    if !(ctl.rel_tol > 0.0 && ctl.abs_tol > 0.0) {
        return Err(FtemError::InvalidParams("tolerances must be positive".into()));
    }
    let mut t = t0;
    let mut y = y0;
    observe(t, &y);
    let mut fin = Finish { t, y, steps: 0, rejected: 0, stopped: false };
    if t_end == t0 {
        return Ok(fin);
    }
    let mut k1 = prob.rhs(t, &y)?;

    let mut h = {
        let d0 = weighted_rms(&y, &y, ctl);
        let d1 = weighted_rms(&k1, &y, ctl);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(ctl.max_step).min(t_end - t0)
    };
    let mut err_prev: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if fin.steps >= ctl.max_steps {
            return Err(FtemError::TooManySteps { t, max_steps: ctl.max_steps });
        }
        let remaining = t_end - t;
        if remaining <= 0.0 {
            break;
        }
        h = h.min(ctl.max_step).min(remaining);
        // snap the last step onto t_end instead of leaving a sliver
        if remaining - h < 1e-12 * remaining.max(1.0) {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(FtemError::StepUnderflow { t });
        }

        let stages = (|| -> Result<([f64; N], [f64; N], f64)> {
            let k2 = prob.rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
            let k3 = prob.rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = prob.rhs(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = prob.rhs(
                t + C5 * h,
                &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = prob.rhs(
                t + h,
                &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            )?;
            let y_new = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = prob.rhs(t + h, &y_new)?;
            let mut err = [0.0; N];
            for i in 0..N {
                err[i] = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let mut s = 0.0;
            for i in 0..N {
                let sc = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(y_new[i].abs());
                s += (err[i] / sc) * (err[i] / sc);
            }
            Ok((y_new, k7, (s / N as f64).sqrt()))
        })();

        let (y_new, k7, err) = match stages {
            Ok(x) => x,
            Err(e) if is_domain(&e) => {
                fin.rejected += 1;
                last_rejected = true;
                h *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };

        if !err.is_finite() || err > 1.0 {
            fin.rejected += 1;
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
            h *= factor;
            last_rejected = true;
            continue;
        }

        if let Trial::Retry(h_new) = prob.check_trial(t, &y, h, &y_new) {
            fin.rejected += 1;
            h = h_new.min(0.999 * h);
            last_rejected = true;
            continue;
        }

        t += h;
        y = y_new;
        k1 = k7;
        fin.steps += 1;
        match prob.after_step(t, &mut y)? {
            Flow::Continue => {}
            Flow::Modified => k1 = prob.rhs(t, &y)?,
            Flow::Stop => {
                observe(t, &y);
                fin.stopped = true;
                break;
            }
        }
        observe(t, &y);

        // PI step-size controller
        let e = err.max(1e-10);
        let mut factor = 0.9 * e.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
        factor = factor.clamp(0.2, 5.0);
        if last_rejected {
            factor = factor.min(1.0);
        }
        h *= factor;
        err_prev = e;
        last_rejected = false;
    }
    fin.t = t;
    fin.y = y;
    Ok(fin)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl Problem<1> for Decay {
        fn rhs(&self, _t: f64, y: &[f64; 1]) -> Result<[f64; 1]> {
            Ok([-y[0]])
        }
    }

    struct Oscillator;
    impl Problem<2> for Oscillator {
        fn rhs(&self, _t: f64, y: &[f64; 2]) -> Result<[f64; 2]> {
            Ok([y[1], -y[0]])
        }
    }

    #[test]
    fn exponential_decay() {
        let ctl = StepControl { rel_tol: 1e-10, abs_tol: 1e-14, ..Default::default() };
        let f = integrate(&mut Decay, 0.0, [1.0], 5.0, &ctl, |_, _| {}).unwrap();
        assert!((f.y[0] - (-5.0f64).exp()).abs() < 1e-11);
        assert_eq!(f.t, 5.0);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let ctl = StepControl { rel_tol: 1e-11, abs_tol: 1e-13, ..Default::default() };
        let tp = 2.0 * std::f64::consts::PI;
        let f = integrate(&mut Oscillator, 0.0, [1.0, 0.0], tp, &ctl, |_, _| {}).unwrap();
        assert!((f.y[0] - 1.0).abs() < 1e-9 && f.y[1].abs() < 1e-9);
    }

    #[test]
    fn tolerance_scaling_is_fifth_order_ish() {
        let run = |tol: f64| {
            let ctl = StepControl { rel_tol: tol, abs_tol: tol * 1e-3, ..Default::default() };
            let f = integrate(&mut Oscillator, 0.0, [1.0, 0.0], 10.0, &ctl, |_, _| {}).unwrap();
            (f.y[0] - 10f64.cos()).abs()
        };
        let coarse = run(1e-6);
        let fine = run(1e-9);
        assert!(fine < coarse);
    }

    struct Halfline;
    impl Problem<1> for Halfline {
        fn rhs(&self, _t: f64, y: &[f64; 1]) -> Result<[f64; 1]> {
            if y[0] < 0.0 {
                return Err(FtemError::Domain("negative".into()));
            }
            Ok([-(y[0].sqrt())])
        }
        fn after_step(&mut self, _t: f64, y: &mut [f64; 1]) -> Result<Flow> {
            if y[0] < 1e-12 {
                y[0] = 0.0;
                return Ok(Flow::Modified);
            }
            Ok(Flow::Continue)
        }
    }

    #[test]
    fn domain_errors_shrink_the_step() {
        // y' = -sqrt(y), y(0) = 1 reaches 0 at t = 2 and must never go negative
        let ctl = StepControl { rel_tol: 1e-8, abs_tol: 1e-14, ..Default::default() };
        let mut min_seen = f64::INFINITY;
        let f = integrate(&mut Halfline, 0.0, [1.0], 3.0, &ctl, |_, y| min_seen = min_seen.min(y[0])).unwrap();
        assert_eq!(f.y[0], 0.0);
        assert!(min_seen >= 0.0);
    }
}
