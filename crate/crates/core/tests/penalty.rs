mod common;

use common::linear_constraints;
use maxcon::model::{complementarity_residual, penalty_value};
use maxcon::penalty::{frank_wolfe, lp1_is_vertex, lp1_problem, lp1_update, lp2_update};
use maxcon::solvers::solve_lp;
use maxcon::{
    consensus, ep_solve, ep_solve_report, exact_max_consensus, init_state, least_squares, ransac, EpConfig, LinearSource,
    ModelParams, RansacConfig, SolveState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn weighted_lp_matches_direct_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..30 {
        let (_, cs) = linear_constraints(12, 3, 0.3, seed);
        let u: Vec<f64> = (0..cs.num_rows()).map(|_| rng.random_range(0.0..1.0)).collect();
        let via_dual = lp1_update(&u, &cs).unwrap();
        let direct = solve_lp(&lp1_problem(&u, &cs).unwrap()).unwrap();
        assert!(direct.is_optimal());
        // The direct objective differs from ours by the constant u^T b.
        let ub: f64 = u.iter().zip(cs.rhs_all()).map(|(a, b)| a * b).sum();
        let scale = 1.0 + direct.objective.abs();
        assert!(
            (via_dual.objective - (direct.objective + ub)).abs() <= 1e-7 * scale,
            "seed {seed}: {} vs {}",
            via_dual.objective,
            direct.objective + ub
        );
    }
}

#[test]
fn weighted_lp_equals_q_for_binary_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..30 {
        let (_, cs) = linear_constraints(15, 2, 0.4, seed);
        let u: Vec<f64> = (0..cs.num_rows()).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let sol = lp1_update(&u, &cs).unwrap();
        let z = SolveState {
            u: u.clone(),
            s: sol.s.clone(),
            v: sol.v.clone(),
        };
        let q = complementarity_residual(&z, &cs);
        assert!((sol.objective - q).abs() <= 1e-9 * (1.0 + q.abs()));
        assert!(lp1_is_vertex(&cs, &sol.v, 1e-8), "seed {seed}");
    }
}

#[test]
fn zero_weights_reach_zero_when_consistent() {
    // A band wide enough for the clean data admits s = 0.
    let data = common::linear_instance(10, 2, 0.0, true, 3);
    let wide = maxcon::reformulate::build_linear_constraints(&data, 1.0).unwrap();
    let sol = lp1_update(&vec![0.0; wide.num_rows()], &wide).unwrap();
    assert!(sol.objective.abs() <= 1e-9);
    assert!(sol.s.iter().all(|&s| s == 0.0));
}

#[test]
fn lp2_examples() {
    let mut b = maxcon::ConstraintSetBuilder::new(1);
    for r in [-0.5, 0.5, 2.0] {
        // Row 1 * v_1 - 0 * v_2 <= -r has residual r at v = 0.
        b.push_datum([(&[1.0][..], -r)]).unwrap();
    }
    let cs = b.build().unwrap();
    let v = [0.0, 0.0];
    assert_eq!(lp2_update(&v, &cs, 1.0).unwrap(), vec![0.0, 0.0, 1.0]);
    assert_eq!(lp2_update(&v, &cs, 0.0).unwrap(), vec![0.0; 3]);
    let mut b = maxcon::ConstraintSetBuilder::new(1);
    for r in [1e-5, 0.3, 4.0] {
        b.push_datum([(&[1.0][..], -r)]).unwrap();
    }
    let cs = b.build().unwrap();
    assert_eq!(lp2_update(&v, &cs, 1e9).unwrap(), vec![1.0; 3]);
}

#[test]
fn frank_wolfe_fixed_point_and_clean_data() {
    let data = common::linear_instance(20, 2, 0.0, true, 8);
    let cs = maxcon::reformulate::build_linear_constraints(&data, 1.0).unwrap();
    let z0 = init_state(&least_squares(&data).unwrap(), &cs).unwrap();
    assert!(z0.u.iter().all(|&u| u == 0.0));
    let out = frank_wolfe(&z0, 0.5, &cs, &EpConfig::default()).unwrap();
    assert!(out.state.u.iter().all(|&u| u == 0.0));
    assert!(penalty_value(&out.state, &cs, 0.5).abs() <= 1e-9);
    // Running again from the result reproduces it in one step.
    let again = frank_wolfe(&out.state, 0.5, &cs, &EpConfig::default()).unwrap();
    assert_eq!(again.iterations, 1);
    assert!((again.penalties[1] - again.penalties[0]).abs() <= 1e-12);
}

#[test]
fn frank_wolfe_is_monotone() {
    for seed in 0..20 {
        let (data, cs) = linear_constraints(40, 4, 0.4, seed);
        let z0 = init_state(&least_squares(&data).unwrap(), &cs).unwrap();
        for alpha in [0.5, 2.5, 12.5] {
            let out = frank_wolfe(&z0, alpha, &cs, &EpConfig::default()).unwrap();
            let slack = 1e-9 * (1.0 + out.penalties[0].abs());
            for w in out.penalties.windows(2) {
                assert!(w[1] <= w[0] + slack);
            }
            assert!(out.iterations <= 1000);
            assert!(out.state.u.iter().all(|&u| u == 0.0 || u == 1.0));
        }
    }
}

#[test]
fn linear_profile_values() {
    let cfg = EpConfig::default();
    assert_eq!((cfg.alpha0, cfg.kappa), (0.5, 5.0));
}

#[test]
fn clean_data_keeps_everything() {
    let data = common::linear_instance(30, 3, 0.0, true, 2);
    let cs = maxcon::reformulate::build_linear_constraints(&data, 1.0).unwrap();
    let r = ep_solve_report(&least_squares(&data).unwrap(), &cs, &EpConfig::default()).unwrap();
    assert!(r.fit.converged);
    assert_eq!(r.fit.consensus, 30);
    assert_eq!(r.state.u.iter().sum::<f64>(), 0.0);
}

#[test]
fn termination_is_feasible_and_consistent() {
    for seed in 0..20 {
        let (data, cs) = linear_constraints(60, 4, 0.4, seed);
        let cfg = EpConfig::default();
        let r = ep_solve_report(&least_squares(&data).unwrap(), &cs, &cfg).unwrap();
        assert!(r.fit.converged, "seed {seed}");
        assert!(complementarity_residual(&r.state, &cs) <= cfg.delta_q_for(&cs));
        let theta = r.state.theta().unwrap();
        let v = maxcon::model::lift_theta(&theta);
        let outliers = r.state.u.iter().filter(|&&u| u == 1.0).count();
        let violated = (0..cs.num_rows()).filter(|&i| cs.row_residual(i, &v) > 0.0).count();
        let band = (0..cs.num_rows()).filter(|&i| cs.row_residual(i, &v).abs() <= 1e-7).count();
        assert!(outliers.abs_diff(violated) <= band, "seed {seed}");
    }
}

#[test]
fn small_instances_close_to_exact() {
    let mut gap = 0usize;
    let mut improved = 0;
    for seed in 0..100 {
        let (data, cs) = linear_constraints(20, 2, 0.4, 1000 + seed);
        let init = ransac(&LinearSource::new(&data), &cs, &RansacConfig::with_seed(seed)).unwrap();
        let fit = ep_solve(&init.theta, &cs, &EpConfig::default()).unwrap();
        let exact = exact_max_consensus(&cs, 2).unwrap();
        assert!(exact.best_consensus >= fit.consensus);
        gap += exact.best_consensus - fit.consensus;
        if fit.consensus >= init.consensus {
            improved += 1;
        }
    }
    assert!(gap as f64 / 100.0 <= 1.0, "mean gap {}", gap as f64 / 100.0);
    assert!(improved >= 95, "improved {improved}");
}

#[test]
fn consensus_is_recomputed_from_theta() {
    let (data, cs) = linear_constraints(30, 3, 0.3, 4);
    let fit = ep_solve(&least_squares(&data).unwrap(), &cs, &EpConfig::default()).unwrap();
    let c = consensus(&fit.theta, &cs, 0.0).unwrap();
    assert_eq!(c.count, fit.consensus);
    assert_eq!(c.mask, fit.inlier_mask);
    let _: &ModelParams = &fit.theta;
}
