use ftem_core::bifurcation::{null_vectors, saddle_node_q, transversality, ExponentCoupling};
use ftem_core::equilibria::{self, full_report, phi};
use ftem_core::linalg::Mat2;
use ftem_core::model::{jacobian_classical, jacobian_modified, rhs_classical, rhs_modified};
use ftem_core::{CompetitionParams, State2};
use proptest::prelude::*;

fn params(q_range: std::ops::Range<f64>) -> impl Strategy<Value = CompetitionParams> {
    (0.2..1.0, 0.2..1.0, 0.5..1.5, 0.5..1.5, 0.1..1.0, 0.1..1.0, 0.2..0.8, q_range).prop_map(
        |(a1, a2, b1, b2, c1, c2, p, q)| CompetitionParams { a1, a2, b1, b2, c1, c2, p, q },
    )
}

fn in_gamma(p: &CompetitionParams, fu: f64, fv: f64) -> State2 {
    let (gu, gv) = p.gamma();
    State2::new(gu * fu, gv * fv)
}

/// Sign changes of `phi` on a dense grid over `(0, a1/c1)`.
fn sampled_roots(p: &CompetitionParams) -> usize {
    let top = p.a1 / p.c1;
    let mut grid: Vec<f64> = (0..3000).map(|i| top * 10f64.powf(-12.0 + 12.0 * i as f64 / 3000.0)).collect();
    grid.extend((1..20000).map(|i| top * i as f64 / 20000.0));
    grid.sort_by(f64::total_cmp);
    let vals: Vec<f64> = grid.iter().map(|&v| phi(v, p).unwrap()).collect();
    vals.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn q_one_matches_classical_exactly(mut p in params(0.5..1.0), fu in 0.0..1.0f64, fv in 0.0..1.0f64) {
        p.q = 1.0;
        let s = in_gamma(&p, fu, fv);
        prop_assert_eq!(rhs_modified(s, &p).unwrap(), rhs_classical(s, &p));
        prop_assert_eq!(jacobian_modified(s, &p).unwrap(), jacobian_classical(s, &p));
    }

    #[test]
    fn jacobian_matches_central_differences(p in params(0.5..0.99), fu in 0.05..1.0f64, fv in 0.05..1.0f64) {
        let s = in_gamma(&p, fu, fv);
        let j = jacobian_modified(s, &p).unwrap();
        let f = |u: f64, v: f64| rhs_modified(State2::new(u, v), &p).unwrap();
        let (hu, hv) = (1e-6 * s.u.max(1e-2), 1e-6 * s.v.max(1e-2));
        let (up, um, vp, vm) = (f(s.u + hu, s.v), f(s.u - hu, s.v), f(s.u, s.v + hv), f(s.u, s.v - hv));
        let fd = [
            [(up.u - um.u) / (2.0 * hu), (vp.u - vm.u) / (2.0 * hv)],
            [(up.v - um.v) / (2.0 * hu), (vp.v - vm.v) / (2.0 * hv)],
        ];
        let scale = j.max_abs();
        for (row, fd_row) in j.0.iter().zip(&fd) {
            for (a, b) in row.iter().zip(fd_row) {
                prop_assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn interior_count_matches_sampled_sign_changes(p in params(0.5..0.99)) {
        let r = full_report(&p).unwrap();
        prop_assert_eq!(r.interior_count, sampled_roots(&p));
        prop_assert!(r.interior_count <= 2);
    }

    #[test]
    fn interior_equilibria_are_zeros(p in params(0.5..0.99)) {
        for e in equilibria::interior_equilibria(&p).unwrap() {
            prop_assert!(e.u > 0.0 && e.v > 0.0);
            let f = rhs_modified(e, &p).unwrap();
            prop_assert!(f.u.abs().max(f.v.abs()) < 1e-10, "residual {f:?} at {e:?}");
        }
    }

    #[test]
    fn eigenvalues_reproduce_trace_and_determinant(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64, d in -5.0..5.0f64) {
        let m = Mat2::new(a, b, c, d);
        let [l1, l2] = m.eigenvalues();
        let scale = 1.0 + m.max_abs() * m.max_abs();
        prop_assert!(((l1 + l2).re - m.trace()).abs() < 1e-12 * scale);
        prop_assert!((l1 + l2).im.abs() < 1e-12 * scale);
        prop_assert!(((l1 * l2).re - m.det()).abs() < 1e-10 * scale);
        prop_assert!((l1 * l2).im.abs() < 1e-10 * scale);
    }

    #[test]
    fn transversality_scales_with_null_vectors(p in params(0.5..0.99), fu in 0.1..0.9f64, fv in 0.1..0.9f64, s in 0.1..10.0f64) {
        let e = in_gamma(&p, fu, fv);
        let (v, w) = null_vectors(e, &p);
        let (t1, t2) = transversality(e, &p, v, w);
        let (t1s, t2s) = transversality(e, &p, [s * v[0], s * v[1]], w);
        prop_assert!((t1s - t1).abs() <= 1e-12 * t1.abs().max(1e-300));
        prop_assert!((t2s - s * s * t2).abs() <= 1e-12 * (s * s * t2).abs().max(1e-300));
        let (t1w, t2w) = transversality(e, &p, v, [s * w[0], s * w[1]]);
        prop_assert!((t1w - s * t1).abs() <= 1e-12 * (s * t1).abs().max(1e-300));
        prop_assert!((t2w - s * t2).abs() <= 1e-12 * (s * t2).abs().max(1e-300));
    }
}

#[test]
fn fold_point_is_rank_deficient_with_null_vectors() {
    let base = CompetitionParams::new(0.4, 0.7, 1.0, 1.0, 0.6, 0.8, 0.6, 0.91).unwrap();
    let r = saddle_node_q(&base, (0.8, 0.99), ExponentCoupling::Fixed).unwrap();
    let p = base.with_q(r.q_c);
    let j = jacobian_modified(r.e_max, &p).unwrap();
    assert!(j.det().abs() < 1e-8 * j.max_abs().powi(2));
    let jv = j.mul_vec(r.v);
    let wj = j.transpose().mul_vec(r.w);
    assert!(jv[0].abs().max(jv[1].abs()) < 1e-6, "{jv:?}");
    assert!(wj[0].abs().max(wj[1].abs()) < 1e-6, "{wj:?}");
    assert!(r.t1 != 0.0 && r.t2 != 0.0);
    let below = full_report(&p.with_q(r.q_c - 1e-3)).unwrap().interior_count;
    let above = full_report(&p.with_q(r.q_c + 1e-3)).unwrap().interior_count;
    assert_eq!((below, above), (0, 2));
}
