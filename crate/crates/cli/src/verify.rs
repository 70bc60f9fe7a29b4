//! Randomized self-checks against independent oracles.

use ftem_core::equilibria::{self, phi};
use ftem_core::model::{jacobian_classical, jacobian_modified, rhs_classical, rhs_modified};
use ftem_core::pde::{self, PdeConfig, PdeState, Profile, Scheme, TimeStep};
use ftem_core::{CompetitionParams, State2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::VerifyParams;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn run(p: &VerifyParams, seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = vec![
        q_one_reduction(&mut rng, p.reduction_sets),
        jacobian_fd(&mut rng, p.jacobian_points, p.jacobian_tol),
        root_counts(&mut rng, p.root_sets),
        mass_conservation(p.mass_steps, p.mass_tol),
        fte_oracle(&mut rng, p.fte_triples, p.fte_tol),
    ];
    VerifyReport { passed: checks.iter().all(|c| c.passed), checks }
}

fn random_params(rng: &mut ChaCha8Rng, harvested: bool) -> CompetitionParams {
    let (p, q) = if harvested { (rng.gen_range(0.2..0.8), rng.gen_range(0.5..0.99)) } else { (rng.gen_range(0.2..0.8), 1.0) };
    CompetitionParams {
        a1: rng.gen_range(0.2..1.0),
        a2: rng.gen_range(0.2..1.0),
        b1: rng.gen_range(0.5..1.5),
        b2: rng.gen_range(0.5..1.5),
        c1: rng.gen_range(0.1..1.0),
        c2: rng.gen_range(0.1..1.0),
        p,
        q,
    }
}

fn random_state(rng: &mut ChaCha8Rng, p: &CompetitionParams, floor: f64) -> State2 {
    let (gu, gv) = p.gamma();
    State2::new(gu * rng.gen_range(floor..1.0), gv * rng.gen_range(floor..1.0))
}

fn q_one_reduction(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let mut worst = 0.0_f64;
    for _ in 0..n {
        let p = random_params(rng, false);
        let s = random_state(rng, &p, 0.0);
        let (a, b) = (rhs_modified(s, &p), rhs_classical(s, &p));
        let (ja, jb) = (jacobian_modified(s, &p), jacobian_classical(s, &p));
        match (a, ja) {
            (Ok(a), Ok(ja)) => {
                worst = worst.max((a.u - b.u).abs()).max((a.v - b.v).abs());
                for i in 0..2 {
                    for j in 0..2 {
                        worst = worst.max((ja.0[i][j] - jb.0[i][j]).abs());
                    }
                }
            }
            _ => worst = f64::INFINITY,
        }
    }
    Check { name: "q_one_reduction", passed: worst == 0.0, samples: n, worst, tolerance: 0.0, detail: String::new() }
}

#[allow(clippy::needless_range_loop)]
fn jacobian_fd(rng: &mut ChaCha8Rng, n: usize, tol: f64) -> Check {
    let mut worst = 0.0_f64;
    for _ in 0..n {
        let p = random_params(rng, true);
        let s = random_state(rng, &p, 0.05);
        let j = jacobian_modified(s, &p).expect("interior point");
        let f = |u: f64, v: f64| rhs_modified(State2::new(u, v), &p).expect("interior point");
        let hu = 1e-6 * s.u.max(1e-2);
        let hv = 1e-6 * s.v.max(1e-2);
        let (up, um) = (f(s.u + hu, s.v), f(s.u - hu, s.v));
        let (vp, vm) = (f(s.u, s.v + hv), f(s.u, s.v - hv));
        let fd = [
            [(up.u - um.u) / (2.0 * hu), (vp.u - vm.u) / (2.0 * hv)],
            [(up.v - um.v) / (2.0 * hu), (vp.v - vm.v) / (2.0 * hv)],
        ];
        let scale = j.max_abs().max(1e-300);
        for i in 0..2 {
            for k in 0..2 {
                worst = worst.max((j.0[i][k] - fd[i][k]).abs() / scale);
            }
        }
    }
    Check { name: "jacobian_fd", passed: worst < tol, samples: n, worst, tolerance: tol, detail: String::new() }
}

/// Sign changes of the interior nullcline map on a dense mixed grid over
/// `(0, a1/c1)`, the range where the matching `u` is positive.
fn sampled_root_count(p: &CompetitionParams) -> usize {
    let top = p.a1 / p.c1;
    let mut grid: Vec<f64> = (0..4000).map(|i| top * 10f64.powf(-12.0 + 12.0 * i as f64 / 4000.0)).collect();
    grid.extend((1..20000).map(|i| top * i as f64 / 20000.0));
    grid.sort_by(f64::total_cmp);
    let vals: Vec<f64> = grid.iter().map(|&v| phi(v, p).expect("v > 0")).collect();
    vals.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count()
}

fn root_counts(rng: &mut ChaCha8Rng, n: usize) -> Check {
    let mut mismatches = Vec::new();
    for i in 0..n {
        let p = random_params(rng, true);
        let tool = equilibria::full_report(&p).map(|r| r.interior_count);
        let oracle = sampled_root_count(&p);
        if tool.as_ref().ok() != Some(&oracle) {
            mismatches.push(format!("set {i}: tool {tool:?}, sampled {oracle}"));
        }
    }
    Check {
        name: "root_count_oracle",
        passed: mismatches.is_empty(),
        samples: n,
        worst: mismatches.len() as f64,
        tolerance: 0.0,
        detail: mismatches.join("; "),
    }
}

fn mass_conservation(steps: usize, tol: f64) -> Check {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for scheme in [Scheme::Explicit, Scheme::LinearlyImplicit] {
        let cfg = PdeConfig {
            x_lo: 0.0,
            x_hi: 1.0,
            n_cells: 64,
            d1: 0.2,
            d2: 0.1,
            k: 0.3,
            p: 1.6,
            m: Profile::Polynomial(vec![0.0]),
            eps_reg: 1e-8,
            scheme,
            time_step: match scheme {
                Scheme::Explicit => TimeStep::Cfl { sigma: 0.9 },
                Scheme::LinearlyImplicit => TimeStep::Fixed { dt: 1e-3 },
            },
            t_end: 1.0,
            reactions: false,
            c_embed: 1.0,
            extinction_tol: 1e-6,
            snapshot_interval: None,
            norm_interval: None,
            max_steps: 1000,
        };
        let mut s = PdeState::from_profiles(&cfg, &Profile::Polynomial(vec![1.5, -1.0]), &Profile::Polynomial(vec![0.0, 0.0, 1.0]))
            .expect("nonnegative profiles");
        let dx = cfg.dx();
        for _ in 0..steps {
            let next = pde::step(&s, &cfg).expect("stable step");
            for (a, b) in [(&s.u, &next.u), (&s.v, &next.v)] {
                let (m0, m1) = (pde::mass(a, dx), pde::mass(b, dx));
                worst = worst.max((m1 - m0).abs() / m0);
            }
            s = next;
            count += 1;
        }
    }
    Check { name: "pde_mass_conservation", passed: worst < tol, samples: count, worst, tolerance: tol, detail: String::new() }
}

/// Extinction time of `Y' = M Y - C Y^alpha` by classical RK4 with steps of
/// fixed relative size, finished by a quadratic Taylor extrapolation of
/// `Z = Y^(1-alpha)` (which obeys a linear equation) down to zero.
pub fn fte_rk_oracle(y0: f64, m: f64, c: f64, alpha: f64) -> f64 {
    let beta = 1.0 - alpha;
    let f = |y: f64| m * y - c * y.powf(alpha);
    let stop = (1e-3 * c / m).powf(1.0 / beta);
    let (mut t, mut y) = (0.0, y0);
    while y > stop {
        let slope = f(y);
        let h = (1e-3 * y / slope.abs()).min(1e-3 / m);
        let k1 = slope;
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    let z = y.powf(beta);
    let dz = beta * (m * z - c);
    let ddz = beta * m * dz;
    // smallest positive root of z + dz tau + ddz tau^2 / 2
    let disc = dz * dz - 2.0 * ddz * z;
    let tau = (-dz - disc.sqrt()) / ddz;
    t + tau
}

fn fte_oracle(rng: &mut ChaCha8Rng, n: usize, tol: f64) -> Check {
    let mut triples: Vec<(f64, f64, f64, f64)> = vec![(1.0, 2.0, 0.5, 1.0)];
    while triples.len() < n.max(1) {
        let m: f64 = rng.gen_range(0.5..2.0);
        let c: f64 = rng.gen_range(0.5..3.0);
        let alpha: f64 = rng.gen_range(0.2..0.8);
        let theta: f64 = rng.gen_range(0.1..0.9);
        triples.push((m, c, alpha, theta * (c / m).powf(1.0 / (1.0 - alpha))));
    }
    let mut worst = 0.0_f64;
    let mut detail = String::new();
    for &(m, c, alpha, y0) in &triples {
        let closed = pde::fte_supersolution(y0, m, c, alpha, 2).ok().and_then(|r| r.extinction_time);
        let oracle = fte_rk_oracle(y0, m, c, alpha);
        let err = match closed {
            Some(t) => (t - oracle).abs() / oracle,
            None => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    let anchor = pde::fte_supersolution(1.0, 1.0, 2.0, 0.5, 2).ok().and_then(|r| r.extinction_time);
    let anchor_ok = anchor.is_some_and(|t| (t - 2.0 * 2f64.ln()).abs() < tol);
    if !anchor_ok {
        detail = format!("t* for (1, 2, 0.5, 1) is {anchor:?}");
    }
    Check {
        name: "fte_closed_form_vs_rk",
        passed: worst < tol && anchor_ok,
        samples: triples.len(),
        worst,
        tolerance: tol,
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_reproduces_two_ln_two() {
        let t = fte_rk_oracle(1.0, 1.0, 2.0, 0.5);
        assert!((t - 2.0 * 2f64.ln()).abs() < 1e-9, "{t}");
    }
}
