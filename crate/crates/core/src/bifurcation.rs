//! Saddle-node and boundary-collision thresholds in the harvesting
//! parameter `q`, Sotomayor transversality data and equilibrium sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{self, phi, v_max, EquilibriumReport};
use crate::error::{FtemError, Result};
use crate::fmt_f64;
use crate::model::{self, CompetitionParams, State2};
use crate::roots::find_root;

/// Absolute tolerance on located `q` thresholds.
pub const Q_TOL: f64 = 1e-10;
/// `|det J| <= RANK_TOL * max|J|^2` counts as rank deficient.
pub const RANK_TOL: f64 = 1e-8;

/// How the harvesting exponent moves while `q` is continued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentCoupling {
    /// `p` stays at the value in the base parameters.
    #[default]
    Fixed,
    /// `p = q` along the continuation.
    TiedToQ,
}

impl ExponentCoupling {
    pub fn apply(self, base: &CompetitionParams, q: f64) -> CompetitionParams {
        let mut p = base.with_q(q);
        if self == ExponentCoupling::TiedToQ {
            p.p = q;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleNodeResult {
    pub q_c: f64,
    pub e_max: State2,
    pub lambda2: f64,
    pub v: [f64; 2],
    pub w: [f64; 2],
    pub t1: f64,
    pub t2: f64,
    pub det_j: f64,
}

/// `phi(v_max(q); q)`: positive when two interior roots exist.
fn fold_map(base: &CompetitionParams, coupling: ExponentCoupling, q: f64) -> Result<f64> {
    let p = coupling.apply(base, q);
    phi(v_max(&p)?, &p)
}

/// Locate the fold of the interior nullcline map in `q` within `bracket`.
pub fn saddle_node_q(
    base: &CompetitionParams,
    bracket: (f64, f64),
    coupling: ExponentCoupling,
) -> Result<SaddleNodeResult> {
    let (q_lo, q_hi) = bracket;
    if !(0.0 < q_lo && q_lo < q_hi && q_hi < 1.0) {
        return Err(FtemError::InvalidParams(format!("bracket ({q_lo}, {q_hi}) must satisfy 0 < lo < hi < 1")));
    }
    if base.competition_margin() <= 0.0 {
        return Err(FtemError::InvalidParams("saddle-node search needs b1 b2 - c1 c2 > 0".into()));
    }
    let g = |q: f64| fold_map(base, coupling, q);
    let (g_lo, g_hi) = (g(q_lo)?, g(q_hi)?);
    if g_lo.signum() == g_hi.signum() {
        return Err(FtemError::NoBifurcation { q_lo, q_hi });
    }
    let q_c = find_root(g, q_lo, q_hi, Q_TOL)?;
    let p = coupling.apply(base, q_c);
    let vm = v_max(&p)?;
    let e_max = State2::new((p.a1 - p.c1 * vm) / p.b1, vm);
    let j = model::jacobian_modified(e_max, &p)?;
    let ev = j.eigenvalues();
    let lambda2 = if ev[0].re.abs() > ev[1].re.abs() { ev[0].re } else { ev[1].re };
    let (v, w) = null_vectors(e_max, &p);
    let (t1, t2) = transversality(e_max, &p, v, w);
    Ok(SaddleNodeResult { q_c, e_max, lambda2, v, w, t1, t2, det_j: j.det() })
}

/// Right and left null vectors of `J` at an interior fold point, in the
/// unnormalized closed forms `V = (c1, -b1)` and `W = (c2 v, -b1 u)`.
pub fn null_vectors(e: State2, p: &CompetitionParams) -> ([f64; 2], [f64; 2]) {
    ([p.c1, -p.b1], [p.c2 * e.v, -p.b1 * e.u])
}

/// `F_q`: derivative of the vector field with respect to `q`.
pub fn d_field_dq(e: State2, p: &CompetitionParams) -> [f64; 2] {
    [0.0, p.a2 * e.v + model::pow0(e.v, p.p)]
}

/// Second derivative `D^2 F(x)(a, b)` of the harvested field.
pub fn second_derivative(e: State2, p: &CompetitionParams, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let fu = -2.0 * p.b1 * a[0] * b[0] - p.c1 * (a[0] * b[1] + a[1] * b[0]);
    let g_vv = -2.0 * p.b2 - (1.0 - p.q) * p.p * (p.p - 1.0) * e.v.powf(p.p - 2.0);
    let gu = -p.c2 * (a[0] * b[1] + a[1] * b[0]) + g_vv * a[1] * b[1];
    [fu, gu]
}

/// `(T1, T2) = (W . F_q, W . D^2F(V, V))` for arbitrary `V`, `W`.
pub fn transversality(e: State2, p: &CompetitionParams, v: [f64; 2], w: [f64; 2]) -> (f64, f64) {
    let fq = d_field_dq(e, p);
    let d2 = second_derivative(e, p, v, v);
    (w[0] * fq[0] + w[1] * fq[1], w[0] * d2[0] + w[1] * d2[1])
}

/// Sotomayor quantities at a caller-supplied interior point.
pub fn sotomayor_check(p: &CompetitionParams, e: State2) -> Result<(f64, f64)> {
    p.validate()?;
    if !(e.u > 0.0 && e.v > 0.0) {
        return Err(FtemError::InvalidParams("Sotomayor check needs an interior point".into()));
    }
    let j = model::jacobian_modified(e, p)?;
    let det = j.det();
    let scale = j.max_abs();
    if det.abs() > RANK_TOL * scale * scale {
        return Err(FtemError::NotRankDeficient { det });
    }
    let (v, w) = null_vectors(e, p);
    Ok(transversality(e, p, v, w))
}

/// Boundary-collision threshold and the two closed forms for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchforkResult {
    /// Numerically located `q` where an interior branch reaches `u = 0`.
    pub q_star: f64,
    /// `v` of the collision point (`a1 / c1`).
    pub v_bar: f64,
    /// Closed form as printed with the theorem, evaluated at `v_bar`.
    pub q_theorem: f64,
    /// Closed form re-derived from the slope equality, evaluated at `v_bar`.
    pub q_rederived: f64,
}

/// Signed `u`-crossing map: `phi(a1/c1; q) / b1`, which equals
/// `psi(a1/c1; q)`; it vanishes exactly when an interior root of `phi` sits
/// on the axis `u = 0`.
fn collision_map(base: &CompetitionParams, q: f64) -> Result<f64> {
    let p = base.with_q(q);
    Ok(phi(p.a1 / p.c1, &p)? / p.b1)
}

pub fn pitchfork_q(base: &CompetitionParams) -> Result<PitchforkResult> {
    base.validate()?;
    let lo = 1e-9;
    let hi = 1.0 - 1e-12;
    let (g_lo, g_hi) = (collision_map(base, lo)?, collision_map(base, hi)?);
    if g_lo.signum() == g_hi.signum() {
        return Err(FtemError::CollisionNotFound);
    }
    let q_star = find_root(|q| collision_map(base, q), lo, hi, Q_TOL)?;
    let v_bar = base.a1 / base.c1;
    let margin = base.competition_margin();
    let one_p = 1.0 - base.p;
    let q_theorem = v_bar / base.a2 * (base.c2 * margin / one_p + base.b2);
    let q_rederived = v_bar / base.a2 * (base.b2 + margin / (base.b1 * one_p));
    Ok(PitchforkResult { q_star, v_bar, q_theorem, q_rederived })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: f64,
    pub report: Option<EquilibriumReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// One equilibrium report per `q`; failures are recorded per row.
/// `jobs = 0` uses rayon's default pool.
pub fn sweep_q(base: &CompetitionParams, q_grid: &[f64], jobs: usize) -> Result<Vec<SweepRow>> {
    if q_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(FtemError::InvalidParams("q grid must be strictly increasing".into()));
    }
    if let Some(q) = q_grid.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(FtemError::InvalidParams(format!("q grid value {q} outside (0, 1]")));
    }
    let row = |q: &f64| {
        let p = base.with_q(*q);
        match equilibria::full_report(&p) {
            Ok(r) => SweepRow { q: *q, report: Some(r), error: None },
            Err(e) => SweepRow { q: *q, report: None, error: Some(e.to_string()) },
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| FtemError::InvalidParams(format!("thread pool: {e}")))?;
    Ok(pool.install(|| q_grid.par_iter().map(row).collect()))
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Sweep table: `q,n_interior,n_boundary_v`, then `(u,v,stability)` per
/// interior branch (ascending `v`), padded to the widest row, then `error`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let width = rows.iter().filter_map(|r| r.report.as_ref()).map(|r| r.interior_count).max().unwrap_or(0);
    let mut out = String::from("q,n_interior,n_boundary_v");
    for i in 1..=width {
        out.push_str(&format!(",u{i},v{i},stability{i}"));
    }
    out.push_str(",error\n");
    for r in rows {
        out.push_str(&fmt_f64(r.q));
        match &r.report {
            Some(rep) => {
                out.push_str(&format!(",{},{}", rep.interior_count, rep.boundary_v_count));
                let mut n = 0;
                for pt in rep.interior() {
                    out.push_str(&format!(
                        ",{},{},{}",
                        fmt_f64(pt.location.u),
                        fmt_f64(pt.location.v),
                        pt.stability.as_str()
                    ));
                    n += 1;
                }
                for _ in n..width {
                    out.push_str(",,,");
                }
                out.push_str(",\n");
            }
            None => {
                out.push_str(",,");
                for _ in 0..width {
                    out.push_str(",,,");
                }
                let msg = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
                out.push_str(&format!(",{msg}\n"));
            }
        }
    }
    out
}
