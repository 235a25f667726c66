//! Property tests: solver-level invariants (scaling sanity, duality-gap
//! monotonicity) and model-level invariants (file round trips, metric
//! monotonicity, simulation box invariance).

use meshdiss::lmicore::{AffineMatrixExpr, LmiProblem, LmiStatus, Tolerances};
use meshdiss::netmodel::{generate_random, GenConfig};
use meshdiss::sim::{simulate, DisturbanceProfile};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Small feasibility problem: [[x, r], [r, x]] ⪰ 0 with x free; feasible for
/// any r (x >= |r| exists); turned infeasible by capping x below |r|.
fn disc_problem(r: f64, cap: Option<f64>, scale: f64, tol: Tolerances) -> LmiProblem {
    let mut p = LmiProblem::new(tol);
    let x = p.scalar_var("x");
    let mut c = DMatrix::zeros(2, 2);
    c[(0, 1)] = r;
    c[(1, 0)] = r;
    let expr = AffineMatrixExpr::block(&[
        vec![p.expr(x), AffineMatrixExpr::zero(1, 1)],
        vec![AffineMatrixExpr::zero(1, 1), p.expr(x)],
    ])
    .add(&AffineMatrixExpr::constant(c))
    .scale(scale);
    p.add_psd(expr, "disc");
    if let Some(cap) = cap {
        let bound = AffineMatrixExpr::constant(DMatrix::from_element(1, 1, cap)).sub(&p.expr(x));
        p.add_ineq(bound.scale(scale), "x cap");
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scaling_does_not_change_feasibility_status(
        r in 0.1f64..5.0,
        scale in 0.01f64..100.0,
        feasible in proptest::bool::ANY,
    ) {
        let tol = Tolerances::default();
        let cap = if feasible { None } else { Some(r * 0.5) };
        let base = disc_problem(r, cap, 1.0, tol).solve().unwrap();
        let scaled = disc_problem(r, cap, scale, tol).solve().unwrap();
        prop_assert_eq!(base.status, scaled.status,
            "r = {}, cap = {:?}, scale = {}", r, cap, scale);
    }

    #[test]
    fn network_file_round_trip(seed in 0u64..500) {
        let mut cfg = GenConfig::reference(seed);
        cfg.group_sizes = vec![2, 3];
        let net = generate_random(&cfg).unwrap();
        let dir = std::env::temp_dir().join("meshdiss-prop-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("net-{seed}.json"));
        meshdiss::netmodel::save_network(&net, &path).unwrap();
        let loaded = meshdiss::netmodel::load_network(&path).unwrap();
        std::fs::remove_file(&path).ok();
        prop_assert_eq!(net, loaded);
    }

    #[test]
    fn jm_is_monotone_in_threshold(seed in 0u64..200) {
        let mut cfg = GenConfig::reference(seed);
        cfg.group_sizes = vec![3, 3];
        let net = generate_random(&cfg).unwrap();
        let m0 = &net.m_inter;
        let mut prev = f64::INFINITY;
        for k in 0..=10 {
            let t = 0.05 * k as f64;
            let jm = meshdiss::evaluation::metric_jm(
                m0,
                &meshdiss::evaluation::threshold_prune(m0, t),
            ).unwrap();
            prop_assert!(jm <= prev + 1e-12, "J_M increased from {} to {} at t = {}", prev, jm, t);
            prev = jm;
        }
    }

    #[test]
    fn simulation_states_stay_in_unit_box(seed in 0u64..50, dist_seed in 0u64..50) {
        let mut cfg = GenConfig::reference(seed);
        cfg.group_sizes = vec![3, 2];
        let net = generate_random(&cfg).unwrap();
        let profile = DisturbanceProfile::default_for(&net, dist_seed);
        // All event windows start within the horizon.
        let traj = simulate(&net, None, &profile, 130.0, 0.01, dist_seed).unwrap();
        for row in &traj.states {
            for &v in row {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        prop_assert!(traj.max_box_violation < 1e-6);
    }
}

#[test]
fn duality_gap_monotonicity_on_seeded_problems() {
    // minimize x s.t. [[x, r], [r, x]] ⪰ 0 has optimum |r|; shrinking the
    // gap tolerance never increases the objective error across the fixed
    // problem set.
    let rs = [0.3, 0.7, 1.3, 2.9, 4.1];
    let error_at = |gap: f64| -> f64 {
        let tol = Tolerances {
            gap,
            ..Tolerances::default()
        };
        rs.iter()
            .map(|&r| {
                let mut p = disc_problem(r, None, 1.0, tol);
                let x = meshdiss::lmicore::VarId(0);
                p.minimize(AffineMatrixExpr::var(x, 1, 1));
                let sol = p.solve().unwrap();
                assert_eq!(sol.status, LmiStatus::Optimal);
                (sol.scalar(x) - r).abs()
            })
            .fold(0.0, f64::max)
    };
    let loose = error_at(1e-4);
    let tight = error_at(1e-9);
    assert!(
        tight <= loose + 1e-12,
        "tightening the gap increased the error: {tight:.3e} > {loose:.3e}"
    );
}

#[test]
fn verification_independence_self_test() {
    // Re-checked residuals of accepted solutions stay within 10x the
    // feasibility tolerance on a standard problem set.
    let tol = Tolerances::default();
    for r in [0.2, 1.0, 3.5] {
        let mut p = disc_problem(r, None, 1.0, tol);
        p.minimize(AffineMatrixExpr::var(meshdiss::lmicore::VarId(0), 1, 1));
        let sol = p.solve().unwrap();
        assert!(sol.is_feasible());
        assert!(
            sol.residuals.psd <= 10.0 * tol.feas && sol.residuals.elem <= 10.0 * tol.feas,
            "residuals {:?} exceed 10x feasibility tolerance",
            sol.residuals
        );
    }
}
