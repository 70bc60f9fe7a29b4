//! Acceptance gate: one test per criterion, each printing a single
//! `ACCEPTANCE <n> PASS|FAIL` line (written straight to stderr so it shows
//! up even when test output is captured).

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use ftem_cli::commands::{self, Origin, SimCaseResult};
use ftem_cli::config::{Params, Resolved};
use ftem_cli::{parse_config, verify, Command};
use ftem_core::aphid::AphidModel;
use ftem_core::bifurcation::{saddle_node_q, ExponentCoupling};
use ftem_core::equilibria::{EquilibriumKind, Stability};
use ftem_core::model::classify_classical_regime;
use ftem_core::pde::Outcome;
use ftem_core::{Regime, State2};

fn recipe(name: &str, cmd: Command) -> Resolved {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../recipes").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(cmd, &text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn verdict(n: u32, title: &str, ok: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let timely = elapsed < limit;
    let pass = ok && timely;
    let line = format!(
        "ACCEPTANCE {n} {} {title}: {detail}; runtime {:.3} s (limit {} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(pass, "{line}");
}

#[test]
fn criterion_1_interior_counts() {
    let cfg = recipe("interior_counts.json", Command::Equilibria);
    let Params::Equilibria(p) = &cfg.params else { unreachable!() };
    let t0 = Instant::now();
    let reports = commands::equilibria(p).expect("equilibria");
    let elapsed = t0.elapsed();
    let counts: Vec<usize> = reports.iter().map(|r| r.report.interior_count).collect();
    let expected = vec![0, 1, 2];
    let detail = format!("interior counts {counts:?}, expected {expected:?}");
    verdict(1, "interior-equilibrium counts", counts == expected, elapsed, Duration::from_secs(1), &detail);
}

#[test]
fn criterion_2_saddle_node() {
    let cfg = recipe("saddle_node.json", Command::SaddleNode);
    let Params::SaddleNode(p) = &cfg.params else { unreachable!() };
    let t0 = Instant::now();
    let out = commands::saddle_node(p).expect("saddle-node");
    let elapsed = t0.elapsed();
    let r = &out.result;
    let q_ok = (r.q_c - 0.87272181).abs() <= 1e-4;
    let det_ok = r.det_j.abs() < 1e-8;
    let t_ok = r.t1 != 0.0 && r.t2 != 0.0;
    let count = |q: f64| out.counts.iter().find(|c| c.q == q).map(|c| c.interior_count);
    let counts_ok = count(0.86) == Some(0) && count(0.92) == Some(2);
    let tied = saddle_node_q(&p.params, (p.bracket[0], p.bracket[1]), ExponentCoupling::TiedToQ)
        .map(|t| format!("{:.10}", t.q_c))
        .unwrap_or_else(|e| e.to_string());
    let detail = format!(
        "q_c {:.10} (target 0.87272181 +- 1e-4), |det J| {:.2e}, T1 {:.6}, T2 {:.6}, counts q=0.86 {:?} q=0.92 {:?}; \
         with p tied to q the fold is at {tied}",
        r.q_c,
        r.det_j.abs(),
        r.t1,
        r.t2,
        count(0.86),
        count(0.92)
    );
    verdict(2, "saddle-node threshold", q_ok && det_ok && t_ok && counts_ok, elapsed, Duration::from_secs(5), &detail);
}

/// Every straddling pair splits between the two attractors, and each side
/// of the separatrix maps to one attractor.
fn straddle_split(case: &SimCaseResult, a: &str, b: &str) -> (usize, bool) {
    let runs: Vec<_> = case.runs.iter().filter(|r| r.origin == Origin::Straddle).collect();
    let mut ok = !runs.is_empty();
    let mut side_of = std::collections::HashMap::new();
    for r in &runs {
        let att = r.attractor.clone().unwrap_or_default();
        ok &= att == a || att == b;
        if let Some(prev) = side_of.insert(r.side, att.clone()) {
            ok &= prev == att;
        }
        if att == a {
            // the harvested boundary state is reached in finite time
            ok &= r.extinction_v.is_some() && r.end.v == 0.0;
        }
    }
    let mut pairs = std::collections::HashMap::new();
    for r in &runs {
        pairs.entry(r.pair).or_insert_with(Vec::new).push(r.attractor.clone());
    }
    ok &= pairs.values().all(|v| v.len() == 2 && v[0] != v[1]);
    (runs.len(), ok)
}

fn stable_interior_name(case: &SimCaseResult) -> Option<String> {
    let idx = case.report.points.iter().position(|p| p.kind == EquilibriumKind::Interior && p.stability == Stability::StableNode)?;
    Some(commands::point_name(&case.report, idx))
}

#[test]
fn criterion_3_competitive_exclusion_reversal() {
    let cfg = recipe("competitive_exclusion.json", Command::Simulate);
    let Params::Simulate(p) = &cfg.params else { unreachable!() };
    let t0 = Instant::now();
    let cases = commands::simulate(p, cfg.seed, 4).expect("simulate");
    let regime = classify_classical_regime(&p.cases[0].params).expect("regime");
    let elapsed = t0.elapsed();

    let classical = &cases[0];
    let ev = State2::new(0.0, 0.7);
    let random: Vec<_> = classical.runs.iter().filter(|r| r.origin == Origin::Random).collect();
    let worst = random.iter().map(|r| r.end.dist(&ev)).fold(0.0_f64, f64::max);
    let classical_ok = regime == Regime::VExcludesU && random.len() == 50 && worst < 1e-3;

    let harvested = &cases[1];
    let node = stable_interior_name(harvested).unwrap_or_default();
    let (n, split_ok) = straddle_split(harvested, "Eu", &node);
    let detail = format!(
        "q=1 regime {regime:?}, {} random starts, max distance to (0,0.7) at t=500 {worst:.2e}; \
         q=0.91 {n} straddling starts split between Eu (v extinct in finite time) and {node}: {split_ok}",
        random.len()
    );
    verdict(3, "competitive-exclusion reversal", classical_ok && split_ok, elapsed, Duration::from_secs(30), &detail);
}

#[test]
fn criterion_4_weak_competition_bistability() {
    let cfg = recipe("weak_competition.json", Command::Simulate);
    let Params::Simulate(p) = &cfg.params else { unreachable!() };
    let t0 = Instant::now();
    let cases = commands::simulate(p, cfg.seed, 4).expect("simulate");
    let elapsed = t0.elapsed();

    let classical: Vec<_> = cases[0].report.interior().collect();
    let classical_ok = classical.len() == 1 && classical[0].stability == Stability::StableNode;
    let harvested = &cases[1];
    let mut kinds: Vec<&str> = harvested.report.interior().map(|e| e.stability.as_str()).collect();
    kinds.sort();
    let kinds_ok = kinds == ["SADDLE", "STABLE_NODE"];
    let node = stable_interior_name(harvested).unwrap_or_default();
    let (n, split_ok) = straddle_split(harvested, "Eu", &node);
    let detail = format!(
        "q=1 interior {:?}; q=0.93 interior {kinds:?}; {n} straddling starts split between Eu and {node}: {split_ok}",
        classical.iter().map(|e| e.stability.as_str()).collect::<Vec<_>>()
    );
    verdict(4, "weak-competition bistability", classical_ok && kinds_ok && n == 20 && split_ok, elapsed, Duration::from_secs(30), &detail);
}

fn pde_flip(n: u32, name: &str, need_crossing: bool) {
    let cfg = recipe(name, Command::PdeRun);
    let Params::PdeRun(p) = &cfg.params else { unreachable!() };
    let t0 = Instant::now();
    let runs = commands::pde_run(p, 2).expect("pde-run");
    let elapsed = t0.elapsed();
    let by_p = |x: f64| runs.iter().find(|r| r.summary.p == x).map(|r| &r.summary);
    let (s2, s16) = (by_p(2.0).expect("p = 2 run"), by_p(1.6).expect("p = 1.6 run"));
    let crossing_ok = !need_crossing || s16.l2_crossing_v.is_some_and(f64::is_finite);
    let ok = s2.outcome == Outcome::VWins && s16.outcome == Outcome::UWins && crossing_ok;
    let detail = format!(
        "p=2 {} (u below 1e-6 at t={:?}), p=1.6 {} (v below 1e-6 at t={:?}, L2(v) crossing at t={:?})",
        s2.outcome.as_str(),
        s2.extinction_time,
        s16.outcome.as_str(),
        s16.extinction_time,
        s16.l2_crossing_v
    );
    verdict(n, "PDE outcome flip", ok, elapsed, Duration::from_secs(300), &detail);
}

#[test]
fn criterion_5_pde_scenario_1() {
    pde_flip(5, "pde_scenario1.json", true);
}

#[test]
fn criterion_6_pde_scenario_2() {
    pde_flip(6, "pde_scenario2.json", false);
}

#[test]
fn criterion_7_property_suite() {
    let cfg = recipe("property_suite.json", Command::Verify);
    let Params::Verify(p) = &cfg.params else { unreachable!() };
    let t0 = Instant::now();
    let report = verify::run(p, cfg.seed);
    let elapsed = t0.elapsed();
    let detail = report
        .checks
        .iter()
        .map(|c| format!("{} {} (n={}, worst {:.2e}, tol {:.0e})", c.name, if c.passed { "ok" } else { "bad" }, c.samples, c.worst, c.tolerance))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(7, "property suite", report.passed, elapsed, Duration::from_secs(120), &detail);
}

#[test]
fn criterion_8_aphid() {
    let cfg = recipe("aphid.json", Command::Aphid);
    let Params::Aphid(p) = &cfg.params else { unreachable!() };
    let t0 = Instant::now();
    let runs = commands::aphid_runs(p, 4).expect("aphid");
    let elapsed = t0.elapsed();
    let get = |name: &str, m: AphidModel| runs.iter().find(|r| r.summary.name == name && r.summary.model == m).map(|r| &r.summary).expect("run");

    let (lc, lh) = (get("low_avirulent", AphidModel::Classic), get("low_avirulent", AphidModel::Harvested));
    let persists = lc.extinction_time.is_none() && lc.final_state.is_some_and(|s| s.x_a > 0.0);
    let dies = lh.extinction_time.is_some() && lh.final_state.is_some_and(|s| s.x_a == 0.0);

    let (hc, hh) = (get("high_avirulent", AphidModel::Classic), get("high_avirulent", AphidModel::Harvested));
    let (pc, ph) = (hc.peaks.expect("classic peaks"), hh.peaks.expect("harvested peaks"));
    let lower = ph.x_a.value < pc.x_a.value;
    let apart = (ph.x_a.time - ph.x_v.time).abs() > 1e-3;
    let detail = format!(
        "s0=(0,15,20,30): harvested x_A extinct at t={:?}, classic x_A(end)={:.3e} without extinction; \
         s0=(0,50,5,30): peak x_A harvested {:.2} < classic {:.2}: {lower}; harvested peak times x_A {:.4} vs x_V {:.4}",
        lh.extinction_time,
        lc.final_state.map(|s| s.x_a).unwrap_or(f64::NAN),
        ph.x_a.value,
        pc.x_a.value,
        ph.x_a.time,
        ph.x_v.time
    );
    verdict(8, "aphid qualitative claims", persists && dies && lower && apart, elapsed, Duration::from_secs(10), &detail);
}
