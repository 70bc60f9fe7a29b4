use std::collections::HashMap;

use ftem_core::equilibria::{full_report, Stability};
use ftem_core::ode::{integrate, separatrix, side_of_polyline, IntegratorOptions, Species};
use ftem_core::{CompetitionParams, State2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bistable() -> CompetitionParams {
    CompetitionParams::new(0.4, 0.7, 1.0, 1.0, 0.6, 0.8, 0.6, 0.91).unwrap()
}

fn opts(rel_tol: f64, t_end: f64) -> IntegratorOptions {
    IntegratorOptions { rel_tol, abs_tol: rel_tol * 1e-4, t_end, ..IntegratorOptions::default() }
}

#[test]
fn end_state_converges_with_tolerance() {
    let p = CompetitionParams::new(0.6, 0.5, 1.0, 1.0, 0.3, 0.4, 0.6, 0.95).unwrap();
    let s0 = State2::new(0.1, 0.3);
    let end = |tol: f64| integrate(&p, s0, &opts(tol, 20.0)).unwrap().last().unwrap();
    let reference = end(1e-12);
    let errs: Vec<f64> = [1e-5, 1e-7, 1e-9].iter().map(|&t| end(t).dist(&reference)).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 1e-7, "{errs:?}");
}

#[test]
fn basins_follow_the_separatrix() {
    let p = bistable();
    let report = full_report(&p).unwrap();
    let saddle = report.interior().find(|e| e.stability == Stability::Saddle).unwrap().location;
    let node = report.interior().find(|e| e.stability == Stability::StableNode).unwrap().location;
    let eu = State2::new(p.a1 / p.b1, 0.0);
    let line = separatrix(&p, saddle, 10.0).unwrap();
    let (gu, gv) = p.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut side_to_attractor: HashMap<i8, usize> = HashMap::new();
    let mut used = 0;
    while used < 100 {
        let s0 = State2::new(rng.gen_range(0.0..gu), rng.gen_range(1e-3..gv));
        let (side, dist) = side_of_polyline(&line, s0);
        if dist < 1e-3 {
            continue;
        }
        let end = integrate(&p, s0, &opts(1e-9, 500.0)).unwrap().last().unwrap();
        let which = if end.dist(&eu) < 1e-3 {
            0
        } else if end.dist(&node) < 1e-3 {
            1
        } else {
            panic!("{s0:?} ended at {end:?}");
        };
        let prev = *side_to_attractor.entry(side as i8).or_insert(which);
        assert_eq!(prev, which, "start {s0:?} on side {side}");
        used += 1;
    }
    assert_eq!(side_to_attractor.len(), 2);
}

#[test]
fn harvested_species_dies_in_finite_time_and_stays_dead() {
    let p = bistable();
    let traj = integrate(&p, State2::new(0.39, 0.01), &opts(1e-9, 200.0)).unwrap();
    let t_ext = traj.extinction_time(Species::V).expect("v goes extinct");
    assert!(t_ext < 200.0);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if *t >= t_ext {
            assert_eq!(s.v, 0.0);
        }
    }
    assert!((traj.last().unwrap().u - 0.4).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_stay_in_the_invariant_rectangle(fu in 0.0..1.0f64, fv in 0.0..1.0f64, q in 0.6..1.0f64) {
        let p = bistable().with_q(q);
        let (gu, gv) = p.gamma();
        let traj = integrate(&p, State2::new(gu * fu, gv * fv), &opts(1e-8, 50.0)).unwrap();
        for s in &traj.states {
            prop_assert!(s.u >= 0.0 && s.v >= 0.0, "{s:?}");
            prop_assert!(s.u <= gu * (1.0 + 1e-9) && s.v <= gv * (1.0 + 1e-9), "{s:?}");
        }
    }
}
