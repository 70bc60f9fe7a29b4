//! Bracketed scalar root finding.
//!
//! Every caller in this crate knows a sign-changing bracket (the nullcline
//! maps are piecewise monotone with a singularity at 0), so only bracketing
//! methods are provided.

use crate::error::{FtemError, Result};

const MAX_ITER: usize = 400;

/// Root of `f` in `[lo, hi]` by bisection refined with safeguarded secant
/// steps. Stops when the bracket is narrower than `xtol` (absolute) or an
/// exact zero is hit.
///
/// A secant (regula falsi with Illinois weighting) step is taken only when it
/// falls strictly inside the bracket and the previous step shrank the bracket
/// by at least half; otherwise the midpoint is used.
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(FtemError::NoSignChange { lo: a, hi: b });
    }
    // which endpoint was retained in the last step (for Illinois weighting)
    let mut side = 0i8;
    let mut last_width = b - a;
    for _ in 0..MAX_ITER {
        let width = b - a;
        if width <= xtol {
            break;
        }
        let mut x = a - fa * (b - a) / (fb - fa);
        let slow = width > 0.5 * last_width;
        if !(x > a && x < b) || slow || !x.is_finite() {
            x = 0.5 * (a + b);
        }
        last_width = width;
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Move `start` geometrically towards 0 (factor `shrink`) until `f` has the
/// requested sign. Used to bracket roots of maps that diverge at `0+`.
pub fn shrink_until<F>(mut f: F, start: f64, shrink: f64, negative: bool) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x = start;
    for _ in 0..2000 {
        let fx = f(x)?;
        if (negative && fx < 0.0) || (!negative && fx > 0.0) {
            return Ok(x);
        }
        x *= shrink;
        if x < f64::MIN_POSITIVE {
            break;
        }
    }
    Err(FtemError::NoSignChange { lo: x, hi: start })
}

/// Move `start` geometrically away from 0 (factor `grow`) until `f` has the
/// requested sign, at most `max_steps` times.
pub fn grow_until<F>(mut f: F, start: f64, grow: f64, negative: bool, max_steps: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x = start;
    for _ in 0..max_steps {
        let fx = f(x)?;
        if (negative && fx < 0.0) || (!negative && fx > 0.0) {
            return Ok(x);
        }
        x *= grow;
    }
    Err(FtemError::NoSignChange { lo: start, hi: x })
}
