//! One-dimensional competition-diffusion system with a quasi-linear flux
//! for the second species:
//!
//! ```text
//! u_t = d1 u_xx + u (m - u - v)
//! v_t = (d2 (1-k) v_x + k |v_x|^(p-2) v_x)_x + v (m - u - v)
//! ```
//!
//! on an interval with zero-flux ends. Cell-centred finite volumes; fluxes
//! live on faces and use the one-sided difference across the face.

use serde::{Deserialize, Serialize};

use crate::error::{FtemError, Result};

/// Polynomial in `x` given as a named preset or as coefficients
/// `c0 + c1 x + c2 x^2 + ...`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Preset(&'static str, Vec<f64>),
    Polynomial(Vec<f64>),
}

const PRESETS: &[(&str, &[f64])] = &[("linear:3-x", &[3.0, -1.0]), ("quad:30+x^2", &[30.0, 0.0, 1.0])];

impl Profile {
    pub fn preset(name: &str) -> Result<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, c)| Profile::Preset(n, c.to_vec()))
            .ok_or_else(|| FtemError::InvalidParams(format!("unknown profile preset {name:?}")))
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            Profile::Preset(_, c) | Profile::Polynomial(c) => c,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients().iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolynomialSpec {
    polynomial: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProfileSpec {
    Preset(String),
    Polynomial(PolynomialSpec),
}

impl Serialize for Profile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Profile::Preset(n, _) => ProfileSpec::Preset(n.to_string()),
            Profile::Polynomial(c) => ProfileSpec::Polynomial(PolynomialSpec { polynomial: c.clone() }),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Profile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ProfileSpec::deserialize(d)? {
            ProfileSpec::Preset(n) => Profile::preset(&n).map_err(serde::de::Error::custom),
            ProfileSpec::Polynomial(p) => {
                if p.polynomial.is_empty() || p.polynomial.iter().any(|c| !c.is_finite()) {
                    return Err(serde::de::Error::custom("polynomial needs finite coefficients"));
                }
                Ok(Profile::Polynomial(p.polynomial))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Two-stage strong-stability-preserving Runge–Kutta under a CFL limit.
    #[default]
    Explicit,
    /// Linearly implicit Euler with the full Jacobian (Newton-linearized
    /// flux, coupled reaction block), step doubling and Richardson
    /// extrapolation under `TimeStep::Adaptive`.
    LinearlyImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeStep {
    /// `dt = sigma * dx^2 / (2 D_max)` recomputed every step (explicit only).
    Cfl { sigma: f64 },
    Fixed { dt: f64 },
    /// Error-controlled step, local error relative to each field's
    /// sup-norm kept below `rtol` (linearly implicit only).
    Adaptive { dt_init: f64, dt_max: f64, rtol: f64 },
}

impl Default for TimeStep {
    fn default() -> Self {
        TimeStep::Cfl { sigma: 0.9 }
    }
}

fn default_eps_reg() -> f64 {
    1e-8
}
fn default_true() -> bool {
    true
}
fn default_c() -> f64 {
    1.0
}
fn default_extinction_tol() -> f64 {
    1e-6
}
fn default_max_steps() -> usize {
    50_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_cells: usize,
    pub d1: f64,
    pub d2: f64,
    pub k: f64,
    pub p: f64,
    pub m: Profile,
    #[serde(default = "default_eps_reg")]
    pub eps_reg: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub time_step: TimeStep,
    pub t_end: f64,
    /// Switch the reaction terms off (pure diffusion test mode).
    #[serde(default = "default_true")]
    pub reactions: bool,
    /// Embedding constant in `C~ = min(d2 (1-k), C / k)`; qualitative.
    #[serde(default = "default_c")]
    pub c_embed: f64,
    /// A run stops once the sup-norm of a field falls below this.
    #[serde(default = "default_extinction_tol")]
    pub extinction_tol: f64,
    #[serde(default)]
    pub snapshot_interval: Option<f64>,
    #[serde(default)]
    pub norm_interval: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl PdeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FtemError::InvalidParams(m));
        if !(self.x_lo.is_finite() && self.x_hi.is_finite() && self.x_lo < self.x_hi) {
            return bad(format!("domain [{}, {}] is empty", self.x_lo, self.x_hi));
        }
        if self.n_cells < 2 {
            return bad("n_cells must be at least 2".into());
        }
        if !(self.d1 > 0.0 && self.d2 > 0.0) {
            return bad("diffusion coefficients must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.k) {
            return bad(format!("k must lie in [0, 1], got {}", self.k));
        }
        if !(self.p > 1.0 && self.p <= 2.0) {
            return bad(format!("flux exponent p must lie in (1, 2], got {}", self.p));
        }
        if self.p < 2.0 && !(self.eps_reg > 0.0) {
            return bad("eps_reg must be positive when p < 2".into());
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive".into());
        }
        if !(self.c_embed > 0.0 && self.extinction_tol > 0.0) {
            return bad("c_embed and extinction_tol must be positive".into());
        }
        for (name, iv) in [("snapshot_interval", self.snapshot_interval), ("norm_interval", self.norm_interval)] {
            if let Some(x) = iv {
                if !(x > 0.0) {
                    return bad(format!("{name} must be positive"));
                }
            }
        }
        match (self.scheme, self.time_step) {
            (_, TimeStep::Fixed { dt }) if !(dt > 0.0) => bad("fixed dt must be positive".into()),
            (Scheme::Explicit, TimeStep::Cfl { sigma }) if !(sigma > 0.0 && sigma <= 1.0) => {
                bad(format!("CFL factor must lie in (0, 1], got {sigma}"))
            }
            (Scheme::Explicit, TimeStep::Adaptive { .. }) => {
                bad("adaptive steps are only available with the linearly_implicit scheme".into())
            }
            (Scheme::LinearlyImplicit, TimeStep::Cfl { .. }) => {
                bad("CFL steps are only available with the explicit scheme".into())
            }
            (_, TimeStep::Adaptive { dt_init, dt_max, rtol }) if !(dt_init > 0.0 && dt_max >= dt_init && rtol > 0.0) => {
                bad("adaptive step needs 0 < dt_init <= dt_max and rtol > 0".into())
            }
            _ => Ok(()),
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.n_cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_cells).map(|i| self.x_lo + (i as f64 + 0.5) * dx).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PdeState {
    pub fn from_profiles(cfg: &PdeConfig, u0: &Profile, v0: &Profile) -> Result<Self> {
        let x = cfg.centers();
        let u: Vec<f64> = x.iter().map(|&x| u0.eval(x)).collect();
        let v: Vec<f64> = x.iter().map(|&x| v0.eval(x)).collect();
        if u.iter().chain(&v).any(|w| !(*w >= 0.0)) {
            return Err(FtemError::InvalidParams("initial data must be nonnegative on the grid".into()));
        }
        Ok(PdeState { t: 0.0, u, v })
    }
}

/// Regularized quasi-linear flux `d2 (1-k) g + k (g^2 + eps^2)^((p-2)/2) g`.
pub fn flux_v(grad: f64, d2: f64, k: f64, p: f64, eps_reg: f64) -> f64 {
    diffusivity_v(grad, d2, k, p, eps_reg) * grad
}

/// Derivative of `flux_v` with respect to the gradient.
pub fn flux_slope_v(grad: f64, d2: f64, k: f64, p: f64, eps_reg: f64) -> f64 {
    if p == 2.0 {
        return d2 * (1.0 - k) + k;
    }
    let r = grad * grad + eps_reg * eps_reg;
    d2 * (1.0 - k) + k * r.powf(0.5 * (p - 4.0)) * ((p - 1.0) * grad * grad + eps_reg * eps_reg)
}

/// Secant diffusivity `flux_v(g) / g` (finite at `g = 0`).
pub fn diffusivity_v(grad: f64, d2: f64, k: f64, p: f64, eps_reg: f64) -> f64 {
    let fast = if p == 2.0 { 1.0 } else { (grad * grad + eps_reg * eps_reg).powf(0.5 * (p - 2.0)) };
    d2 * (1.0 - k) + k * fast
}

/// L2 norm on the grid.
pub fn l2(w: &[f64], dx: f64) -> f64 {
    (w.iter().map(|x| x * x).sum::<f64>() * dx).sqrt()
}

pub fn sup(w: &[f64]) -> f64 {
    w.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn mass(w: &[f64], dx: f64) -> f64 {
    w.iter().sum::<f64>() * dx
}

/// Grid-bound solver for one configuration.
#[derive(Debug, Clone)]
pub struct Solver {
    pub cfg: PdeConfig,
    dx: f64,
    m: Vec<f64>,
    /// Mass removed by clipping negative values (explicit scheme).
    pub clipped_mass: f64,
}

impl Solver {
    pub fn new(cfg: &PdeConfig) -> Result<Self> {
        cfg.validate()?;
        let m: Vec<f64> = cfg.centers().iter().map(|&x| cfg.m.eval(x)).collect();
        if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(FtemError::InvalidParams("resource m must be finite and nonnegative on the grid".into()));
        }
        Ok(Solver { cfg: cfg.clone(), dx: cfg.dx(), m, clipped_mass: 0.0 })
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn resource(&self) -> &[f64] {
        &self.m
    }

    /// Diffusivities of `v` on the interior faces (`n - 1` entries).
    fn face_diffusivity(&self, v: &[f64]) -> Vec<f64> {
        let c = &self.cfg;
        v.windows(2)
            .map(|w| diffusivity_v((w[1] - w[0]) / self.dx, c.d2, c.k, c.p, c.eps_reg))
            .collect()
    }

    /// Explicit stability limit `dx^2 / (2 D_max)`.
    pub fn cfl_limit(&self, s: &PdeState) -> f64 {
        let d_max = self.face_diffusivity(&s.v).into_iter().fold(self.cfg.d1, f64::max);
        self.dx * self.dx / (2.0 * d_max)
    }

    fn rates(&self, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
        let n = u.len();
        let h2 = self.dx * self.dx;
        let c = &self.cfg;
        for i in 0..n {
            du[i] = 0.0;
            dv[i] = 0.0;
        }
        for i in 0..n - 1 {
            let fu = c.d1 * (u[i + 1] - u[i]) / h2;
            let fv = flux_v((v[i + 1] - v[i]) / self.dx, c.d2, c.k, c.p, c.eps_reg) / self.dx;
            du[i] += fu;
            du[i + 1] -= fu;
            dv[i] += fv;
            dv[i + 1] -= fv;
        }
        if c.reactions {
            for i in 0..n {
                let g = self.m[i] - u[i] - v[i];
                du[i] += u[i] * g;
                dv[i] += v[i] * g;
            }
        }
    }

    fn clip(&mut self, w: &mut [f64]) {
        for x in w.iter_mut() {
            if *x < 0.0 {
                self.clipped_mass += -*x * self.dx;
                *x = 0.0;
            }
        }
    }

    /// One Heun (SSP-RK2) step of size `dt`.
    pub fn step_explicit(&mut self, s: &PdeState, dt: f64) -> Result<PdeState> {
        let limit = self.cfl_limit(s);
        if dt > limit {
            return Err(FtemError::CflViolation { dt, limit });
        }
        let n = s.u.len();
        let (mut du, mut dv) = (vec![0.0; n], vec![0.0; n]);
        self.rates(&s.u, &s.v, &mut du, &mut dv);
        let mut u1: Vec<f64> = (0..n).map(|i| s.u[i] + dt * du[i]).collect();
        let mut v1: Vec<f64> = (0..n).map(|i| s.v[i] + dt * dv[i]).collect();
        self.clip(&mut u1);
        self.clip(&mut v1);
        self.rates(&u1, &v1, &mut du, &mut dv);
        let mut u: Vec<f64> = (0..n).map(|i| 0.5 * (s.u[i] + u1[i] + dt * du[i])).collect();
        let mut v: Vec<f64> = (0..n).map(|i| 0.5 * (s.v[i] + v1[i] + dt * dv[i])).collect();
        self.clip(&mut u);
        self.clip(&mut v);
        Ok(PdeState { t: s.t + dt, u, v })
    }

    /// One linearly implicit Euler step `(I - dt J) d = dt F(w)`, where `J`
    /// is the exact Jacobian of the semi-discrete system. The result is not
    /// clipped.
    pub fn step_linearly_implicit(&self, s: &PdeState, dt: f64) -> PdeState {
        let n = s.u.len();
        let h2 = self.dx * self.dx;
        let c = &self.cfg;
        let (mut du, mut dv) = (vec![0.0; n], vec![0.0; n]);
        self.rates(&s.u, &s.v, &mut du, &mut dv);
        // face couplings; zero past the boundaries
        let cu = dt * c.d1 / h2;
        let cv: Vec<f64> =
            s.v.windows(2).map(|w| dt * flux_slope_v((w[1] - w[0]) / self.dx, c.d2, c.k, c.p, c.eps_reg) / h2).collect();
        let face = |i: usize| -> [f64; 2] { if i + 1 < n { [cu, cv[i]] } else { [0.0, 0.0] } };

        let mut g = vec![[[0.0; 2]; 2]; n];
        let mut y = vec![[0.0; 2]; n];
        for i in 0..n {
            let right = face(i);
            let left = if i > 0 { face(i - 1) } else { [0.0, 0.0] };
            let mut blk = [[1.0 + left[0] + right[0], 0.0], [0.0, 1.0 + left[1] + right[1]]];
            if c.reactions {
                let (u, v) = (s.u[i], s.v[i]);
                let gr = self.m[i] - u - v;
                blk[0][0] -= dt * (gr - u);
                blk[0][1] += dt * u;
                blk[1][0] += dt * v;
                blk[1][1] -= dt * (gr - v);
            }
            let mut rhs = [dt * du[i], dt * dv[i]];
            if i > 0 {
                // lower block is -diag(left)
                for r in 0..2 {
                    for k in 0..2 {
                        blk[r][k] += left[r] * g[i - 1][r][k];
                    }
                    rhs[r] += left[r] * y[i - 1][r];
                }
            }
            let det = blk[0][0] * blk[1][1] - blk[0][1] * blk[1][0];
            let inv = [[blk[1][1] / det, -blk[0][1] / det], [-blk[1][0] / det, blk[0][0] / det]];
            // upper block is -diag(right)
            for r in 0..2 {
                for k in 0..2 {
                    g[i][r][k] = -inv[r][k] * right[k];
                }
                y[i][r] = inv[r][0] * rhs[0] + inv[r][1] * rhs[1];
            }
        }
        for i in (0..n - 1).rev() {
            let next = y[i + 1];
            for r in 0..2 {
                y[i][r] -= g[i][r][0] * next[0] + g[i][r][1] * next[1];
            }
        }
        PdeState {
            t: s.t + dt,
            u: (0..n).map(|i| s.u[i] + y[i][0]).collect(),
            v: (0..n).map(|i| s.v[i] + y[i][1]).collect(),
        }
    }

    /// Step-doubled linearly implicit step with Richardson extrapolation.
    /// Returns the extrapolated state and the scaled error estimate.
    fn step_doubled(&self, s: &PdeState, dt: f64, rtol: f64) -> (PdeState, f64) {
        let full = self.step_linearly_implicit(s, dt);
        let half = self.step_linearly_implicit(s, 0.5 * dt);
        let two = self.step_linearly_implicit(&half, 0.5 * dt);
        let err = |a: &[f64], b: &[f64], w: &[f64]| {
            let scale = rtol * sup(w) + 1e-300;
            a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
        };
        let e = err(&full.u, &two.u, &s.u).max(err(&full.v, &two.v, &s.v));
        let extrap = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| 2.0 * y - x).collect() };
        let mut out = PdeState { t: two.t, u: extrap(&full.u, &two.u), v: extrap(&full.v, &two.v) };
        if out.u.iter().chain(&out.v).any(|x| *x < 0.0) {
            out = two;
        }
        (out, e)
    }

    /// Clip negatives that are small relative to the field's sup-norm;
    /// `false` if a larger negative value is present.
    fn clip_small(&mut self, s: &mut PdeState, rel: f64) -> bool {
        for w in [&s.u, &s.v] {
            let floor = -rel * sup(w);
            if w.iter().any(|x| *x < floor) {
                return false;
            }
        }
        let (mut u, mut v) = (std::mem::take(&mut s.u), std::mem::take(&mut s.v));
        self.clip(&mut u);
        self.clip(&mut v);
        s.u = u;
        s.v = v;
        true
    }
}

/// One step under the configured scheme and step policy.
pub fn step(state: &PdeState, cfg: &PdeConfig) -> Result<PdeState> {
    let mut solver = Solver::new(cfg)?;
    let dt = match cfg.time_step {
        TimeStep::Cfl { sigma } => sigma * solver.cfl_limit(state),
        TimeStep::Fixed { dt } => dt,
        TimeStep::Adaptive { dt_init, .. } => dt_init,
    };
    match cfg.scheme {
        Scheme::Explicit => solver.step_explicit(state, dt),
        Scheme::LinearlyImplicit => {
            let mut next = solver.step_linearly_implicit(state, dt);
            let (mut u, mut v) = (std::mem::take(&mut next.u), std::mem::take(&mut next.v));
            solver.clip(&mut u);
            solver.clip(&mut v);
            Ok(PdeState { t: next.t, u, v })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub t: f64,
    pub l2_u: f64,
    pub l2_v: f64,
    pub sup_u: f64,
    pub sup_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FteDiagnostic {
    pub m_sup: f64,
    pub c_tilde: f64,
    pub alpha: f64,
    pub y0: f64,
    /// Equilibrium of the comparison ODE, `(C~/M)^(1/(1-alpha))`.
    pub threshold: f64,
    pub predicted_extinction_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRun {
    pub snapshots: Vec<PdeState>,
    pub norms: Vec<NormRow>,
    pub final_state: PdeState,
    /// Field whose sup-norm fell below the extinction tolerance, and when.
    pub extinction: Option<(Field, f64)>,
    /// First times the L2 norms of `u` and `v` fell below the tolerance.
    pub l2_crossing_u: Option<f64>,
    pub l2_crossing_v: Option<f64>,
    pub clipped_mass: f64,
    pub steps: usize,
    pub fte: Option<FteDiagnostic>,
}

fn norms(s: &PdeState, dx: f64) -> NormRow {
    NormRow { t: s.t, l2_u: l2(&s.u, dx), l2_v: l2(&s.v, dx), sup_u: sup(&s.u), sup_v: sup(&s.v) }
}

fn check_finite(s: &PdeState) -> Result<()> {
    let bad = s.u.iter().chain(&s.v).position(|x| !x.is_finite() || x.abs() > 1e12);
    match bad {
        Some(i) => Err(FtemError::Instability {
            t: s.t,
            detail: format!("non-finite or exploding value at entry {i}"),
        }),
        None => Ok(()),
    }
}

/// Integrate from `(u0, v0)` until `t_end` or until a field's sup-norm
/// drops below `extinction_tol`.
pub fn run(cfg: &PdeConfig, u0: &Profile, v0: &Profile) -> Result<PdeRun> {
    let s0 = PdeState::from_profiles(cfg, u0, v0)?;
    run_from(cfg, s0)
}

pub fn run_from(cfg: &PdeConfig, s0: PdeState) -> Result<PdeRun> {
    let mut solver = Solver::new(cfg)?;
    if s0.u.len() != cfg.n_cells || s0.v.len() != cfg.n_cells {
        return Err(FtemError::InvalidParams("initial fields do not match n_cells".into()));
    }
    let dx = solver.dx();
    let tol = cfg.extinction_tol;
    let fte = fte_diagnostic(cfg, &solver, &s0).ok();
    let snap_every = cfg.snapshot_interval.unwrap_or(cfg.t_end / 10.0);
    let norm_every = cfg.norm_interval.unwrap_or(cfg.t_end / 1000.0);
    let mut next_snap = snap_every;
    let mut next_norm = norm_every;

    let mut s = s0;
    let mut snapshots = vec![s.clone()];
    let mut series = vec![norms(&s, dx)];
    let mut l2_crossing_u = None;
    let mut l2_crossing_v = None;
    let mut extinction = None;
    let mut steps = 0usize;
    let mut dt_adapt = match cfg.time_step {
        TimeStep::Adaptive { dt_init, .. } => dt_init,
        TimeStep::Fixed { dt } => dt,
        TimeStep::Cfl { .. } => 0.0,
    };

    while s.t < cfg.t_end {
        if steps >= cfg.max_steps {
            return Err(FtemError::TooManySteps { t: s.t, max_steps: cfg.max_steps });
        }
        let remaining = cfg.t_end - s.t;
        let next = match (cfg.scheme, cfg.time_step) {
            (Scheme::Explicit, TimeStep::Cfl { sigma }) => {
                let dt = (sigma * solver.cfl_limit(&s)).min(remaining);
                solver.step_explicit(&s, dt)?
            }
            (Scheme::Explicit, TimeStep::Fixed { dt }) => solver.step_explicit(&s, dt.min(remaining))?,
            (Scheme::LinearlyImplicit, TimeStep::Fixed { dt }) => {
                let mut next = solver.step_linearly_implicit(&s, dt.min(remaining));
                let (mut u, mut v) = (std::mem::take(&mut next.u), std::mem::take(&mut next.v));
                solver.clip(&mut u);
                solver.clip(&mut v);
                PdeState { t: next.t, u, v }
            }
            (Scheme::LinearlyImplicit, TimeStep::Adaptive { dt_max, rtol, .. }) => {
                let mut dt = dt_adapt.min(remaining);
                loop {
                    let (mut trial, err) = solver.step_doubled(&s, dt, rtol);
                    let finite = trial.u.iter().chain(&trial.v).all(|x| x.is_finite());
                    let ok = finite && err <= 1.0 && solver.clip_small(&mut trial, rtol);
                    if !ok {
                        dt *= if finite { (0.9 / err.sqrt()).clamp(0.1, 0.5) } else { 0.1 };
                        if dt < 1e-14 * s.t.max(1.0) {
                            return Err(FtemError::StepUnderflow { t: s.t });
                        }
                        continue;
                    }
                    dt_adapt = (dt * (0.9 / err.max(1e-12).sqrt()).min(4.0)).min(dt_max);
                    break trial;
                }
            }
            _ => unreachable!("validated scheme/time-step pairing"),
        };
        s = next;
        if remaining <= 1e-12 * cfg.t_end.max(1.0) || s.t > cfg.t_end {
            s.t = cfg.t_end;
        }
        steps += 1;
        check_finite(&s)?;

        let row = norms(&s, dx);
        if l2_crossing_u.is_none() && row.l2_u < tol {
            l2_crossing_u = Some(s.t);
        }
        if l2_crossing_v.is_none() && row.l2_v < tol {
            l2_crossing_v = Some(s.t);
        }
        let done = s.t >= cfg.t_end;
        if row.sup_v < tol {
            extinction = Some((Field::V, s.t));
        } else if row.sup_u < tol {
            extinction = Some((Field::U, s.t));
        }
        let stop = done || extinction.is_some();
        if s.t >= next_norm || stop {
            series.push(row);
            while next_norm <= s.t {
                next_norm += norm_every;
            }
        }
        if s.t >= next_snap || stop {
            snapshots.push(s.clone());
            while next_snap <= s.t {
                next_snap += snap_every;
            }
        }
        if stop {
            break;
        }
    }
    Ok(PdeRun {
        snapshots,
        norms: series,
        final_state: s,
        extinction,
        l2_crossing_u,
        l2_crossing_v,
        clipped_mass: solver.clipped_mass,
        steps,
        fte,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    UWins,
    VWins,
    Coexist,
    Undecided,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::UWins => "U_WINS",
            Outcome::VWins => "V_WINS",
            Outcome::Coexist => "COEXIST",
            Outcome::Undecided => "UNDECIDED",
        }
    }
}

/// Classify the end state of a run by its L2 norms.
pub fn outcome(run: &PdeRun, tol: f64) -> Outcome {
    let end = match run.norms.last() {
        Some(r) => *r,
        None => return Outcome::Undecided,
    };
    match (end.l2_u > tol, end.l2_v > tol) {
        (true, false) => Outcome::UWins,
        (false, true) => Outcome::VWins,
        (true, true) => {
            let t0 = 0.9 * end.t;
            let tail: Vec<_> = run.norms.iter().filter(|r| r.t >= t0).collect();
            let drift = |f: fn(&NormRow) -> f64| {
                let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(f(r)), hi.max(f(r))));
                (hi - lo) / hi
            };
            if tail.len() >= 2 && drift(|r| r.l2_u) < 1e-6 && drift(|r| r.l2_v) < 1e-6 {
                Outcome::Coexist
            } else {
                Outcome::Undecided
            }
        }
        (false, false) => Outcome::Undecided,
    }
}

/// Closed-form solution of the comparison equation `Y' = M Y - C~ Y^alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FteCurve {
    pub extinction_time: Option<f64>,
    pub curve: Vec<(f64, f64)>,
}

/// Extinction time of `Y' = M Y - C~ Y^alpha` from `Y(0) = y0`, and the
/// solution sampled at `samples` points up to that time (or over a few
/// growth times when the solution does not die out).
pub fn fte_supersolution(y0: f64, m: f64, c_tilde: f64, alpha: f64, samples: usize) -> Result<FteCurve> {
    if !(m > 0.0 && c_tilde > 0.0 && m.is_finite() && c_tilde.is_finite()) {
        return Err(FtemError::InvalidParams("M and C~ must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FtemError::InvalidParams(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(y0 >= 0.0 && y0.is_finite()) {
        return Err(FtemError::InvalidParams("Y0 must be nonnegative".into()));
    }
    let beta = 1.0 - alpha;
    let z_eq = c_tilde / m;
    let z0 = y0.powf(beta);
    let t_star = (z0 < z_eq).then(|| (z_eq / (z_eq - z0)).ln() / (beta * m));
    let horizon = t_star.unwrap_or(5.0 / (beta * m));
    let y_at = |t: f64| {
        let z = z_eq + (z0 - z_eq) * (beta * m * t).exp();
        if z <= 0.0 {
            0.0
        } else {
            z.powf(1.0 / beta)
        }
    };
    let n = samples.max(2);
    let curve = (0..n)
        .map(|i| {
            let t = horizon * i as f64 / (n - 1) as f64;
            (t, if Some(t) == t_star { 0.0 } else { y_at(t) })
        })
        .collect();
    Ok(FteCurve { extinction_time: t_star, curve })
}

fn fte_diagnostic(cfg: &PdeConfig, solver: &Solver, s0: &PdeState) -> Result<FteDiagnostic> {
    let m_sup = sup(solver.resource());
    let fast = if cfg.k > 0.0 { cfg.c_embed / cfg.k } else { f64::INFINITY };
    let c_tilde = (cfg.d2 * (1.0 - cfg.k)).min(fast);
    let alpha = cfg.p / 2.0;
    let y0 = l2(&s0.v, solver.dx());
    if !(alpha < 1.0) || !(m_sup > 0.0) || !(c_tilde > 0.0) {
        return Err(FtemError::InvalidParams("comparison equation needs p < 2, m > 0, k < 1".into()));
    }
    let threshold = (c_tilde / m_sup).powf(1.0 / (1.0 - alpha));
    let curve = fte_supersolution(y0, m_sup, c_tilde, alpha, 2)?;
    Ok(FteDiagnostic { m_sup, c_tilde, alpha, y0, threshold, predicted_extinction_time: curve.extinction_time })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: f64, n: usize) -> PdeConfig {
        PdeConfig {
            x_lo: 0.0,
            x_hi: 1.0,
            n_cells: n,
            d1: 0.2,
            d2: 0.199,
            k: 0.5,
            p,
            m: Profile::preset("linear:3-x").unwrap(),
            eps_reg: 1e-8,
            scheme: Scheme::Explicit,
            time_step: TimeStep::Cfl { sigma: 0.9 },
            t_end: 0.01,
            reactions: true,
            c_embed: 1.0,
            extinction_tol: 1e-6,
            snapshot_interval: None,
            norm_interval: None,
            max_steps: 1_000_000,
        }
    }

    #[test]
    fn flux_special_cases() {
        assert_eq!(flux_v(0.7, 0.3, 0.0, 1.5, 1e-8), 0.3 * 0.7);
        assert!((flux_v(0.7, 0.3, 0.4, 2.0, 1e-8) - (0.3 * 0.6 + 0.4) * 0.7).abs() < 1e-15);
        for p in [1.2, 1.6, 2.0] {
            assert_eq!(flux_v(0.0, 0.3, 0.4, p, 1e-8), 0.0);
        }
    }

    #[test]
    fn flux_is_odd_and_monotone() {
        let mut last = f64::NEG_INFINITY;
        for i in -50..=50 {
            let g = i as f64 * 0.1;
            let f = flux_v(g, 0.2, 0.3, 1.6, 1e-8);
            assert!((f + flux_v(-g, 0.2, 0.3, 1.6, 1e-8)).abs() < 1e-15);
            assert!(f > last);
            last = f;
        }
    }

    #[test]
    fn profiles() {
        let m = Profile::preset("quad:30+x^2").unwrap();
        assert_eq!(m.eval(2.0), 34.0);
        assert!(Profile::preset("cubic").is_err());
        let j: Profile = serde_json::from_str(r#"{"polynomial":[1.5,-1.0]}"#).unwrap();
        assert_eq!(j.eval(0.5), 1.0);
        let j: Profile = serde_json::from_str(r#""linear:3-x""#).unwrap();
        assert_eq!(serde_json::to_string(&j).unwrap(), r#""linear:3-x""#);
        assert!(serde_json::from_str::<Profile>(r#"{"polynomial":[1.0],"x":1}"#).is_err());
    }

    #[test]
    fn mass_conserved_without_reactions() {
        for scheme in [Scheme::Explicit, Scheme::LinearlyImplicit] {
            let mut c = cfg(1.6, 64);
            c.reactions = false;
            c.scheme = scheme;
            c.time_step = match scheme {
                Scheme::Explicit => TimeStep::Cfl { sigma: 0.9 },
                Scheme::LinearlyImplicit => TimeStep::Fixed { dt: 1e-3 },
            };
            let mut solver = Solver::new(&c).unwrap();
            let dx = solver.dx();
            let x = c.centers();
            let mut s = PdeState {
                t: 0.0,
                u: x.iter().map(|x| 1.0 + (7.0 * x).sin() * 0.5).collect(),
                v: x.iter().map(|x| x * x * 3.0).collect(),
            };
            for _ in 0..50 {
                let next = match scheme {
                    Scheme::Explicit => {
                        let dt = 0.9 * solver.cfl_limit(&s);
                        solver.step_explicit(&s, dt).unwrap()
                    }
                    Scheme::LinearlyImplicit => solver.step_linearly_implicit(&s, 1e-3),
                };
                for (a, b) in [(&s.u, &next.u), (&s.v, &next.v)] {
                    let (m0, m1) = (mass(a, dx), mass(b, dx));
                    assert!((m1 - m0).abs() <= 1e-12 * m0, "{scheme:?}: {m0} -> {m1}");
                }
                s = next;
            }
            assert_eq!(solver.clipped_mass, 0.0);
        }
    }

    #[test]
    fn constant_state_follows_kinetics() {
        let mut c = cfg(2.0, 16);
        c.m = Profile::Polynomial(vec![2.0]);
        let mut solver = Solver::new(&c).unwrap();
        let s = PdeState { t: 0.0, u: vec![0.5; 16], v: vec![0.25; 16] };
        let dt = 1e-4;
        let next = solver.step_explicit(&s, dt).unwrap();
        // Heun step of the homogeneous ODE
        let f = |u: f64, v: f64| (u * (2.0 - u - v), v * (2.0 - u - v));
        let (a, b) = f(0.5, 0.25);
        let (u1, v1) = (0.5 + dt * a, 0.25 + dt * b);
        let (a2, b2) = f(u1, v1);
        let (ue, ve) = (0.5 * (0.5 + u1 + dt * a2), 0.5 * (0.25 + v1 + dt * b2));
        assert!(next.u.iter().all(|x| (x - ue).abs() < 1e-15));
        assert!(next.v.iter().all(|x| (x - ve).abs() < 1e-15));
    }

    #[test]
    fn fixed_dt_above_cfl_is_rejected() {
        let mut c = cfg(2.0, 64);
        c.time_step = TimeStep::Fixed { dt: 1.0 };
        let s = PdeState::from_profiles(&c, &Profile::Polynomial(vec![1.0]), &Profile::Polynomial(vec![1.0])).unwrap();
        assert!(matches!(step(&s, &c), Err(FtemError::CflViolation { .. })));
    }

    #[test]
    fn linearly_implicit_stays_nonnegative_for_huge_steps() {
        let mut c = cfg(1.6, 64);
        c.scheme = Scheme::LinearlyImplicit;
        c.time_step = TimeStep::Fixed { dt: 100.0 };
        let s = PdeState::from_profiles(&c, &Profile::Polynomial(vec![0.0, 2.0]), &Profile::Polynomial(vec![1.0, -1.0]))
            .unwrap();
        let next = step(&s, &c).unwrap();
        assert!(next.u.iter().chain(&next.v).all(|x| *x >= 0.0));
    }

    #[test]
    fn fte_closed_form_examples() {
        let r = fte_supersolution(1.0, 1.0, 2.0, 0.5, 11).unwrap();
        assert!((r.extinction_time.unwrap() - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert_eq!(r.curve.last().unwrap().1, 0.0);
        // equilibrium of the comparison equation: (C~/M)^(1/(1-alpha)) = 4
        assert_eq!(fte_supersolution(4.0, 1.0, 2.0, 0.5, 3).unwrap().extinction_time, None);
        let small = fte_supersolution(1e-12, 1.0, 2.0, 0.5, 3).unwrap().extinction_time.unwrap();
        assert!(small > 0.0 && small < 1e-5);
        assert!(fte_supersolution(1.0, 1.0, 2.0, 1.0, 3).is_err());
    }

    #[test]
    fn zero_u_gives_v_wins() {
        let mut c = cfg(2.0, 32);
        c.scheme = Scheme::LinearlyImplicit;
        c.time_step = TimeStep::Adaptive { dt_init: 1e-3, dt_max: 1.0, rtol: 1e-4 };
        c.t_end = 50.0;
        let r = run(&c, &Profile::Polynomial(vec![0.0]), &Profile::Polynomial(vec![1.0])).unwrap();
        assert_eq!(outcome(&r, 1e-6), Outcome::VWins);
    }

    #[test]
    fn validation() {
        let mut c = cfg(2.5, 8);
        assert!(c.validate().is_err());
        c.p = 1.5;
        c.k = 1.5;
        assert!(c.validate().is_err());
        c.k = 0.5;
        c.time_step = TimeStep::Adaptive { dt_init: 1.0, dt_max: 2.0, rtol: 0.1 };
        assert!(c.validate().is_err());
    }
}
