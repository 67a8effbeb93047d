mod common;

use common::linear_instance;
use maxcon::reformulate::build_linear_constraints;
use maxcon::{
    am_solve, consensus, ep_solve, exact_max_consensus, l1_fit, least_squares, linf_outlier_removal, lo_ransac,
    ransac, AmConfig, EpConfig, LinearSource, Profile, RansacConfig,
};

#[test]
fn dominates_every_method() {
    for seed in 0..12 {
        let data = linear_instance(15, 2, 0.4, true, 500 + seed);
        let cs = build_linear_constraints(&data, 0.1).unwrap();
        let exact = exact_max_consensus(&cs, 2).unwrap();
        let best_check = consensus(&exact.best_theta, &cs, 0.0).unwrap().count;
        assert_eq!(best_check, exact.best_consensus);

        let source = LinearSource::new(&data);
        let cfg = RansacConfig::with_seed(seed);
        let rs = ransac(&source, &cs, &cfg).unwrap();
        let mut others = vec![
            rs.consensus,
            lo_ransac(&source, &cs, &cfg, false).unwrap().consensus,
            lo_ransac(&source, &cs, &cfg, true).unwrap().consensus,
            l1_fit(&cs).unwrap().consensus,
            linf_outlier_removal(&cs).unwrap().consensus,
            consensus(&least_squares(&data).unwrap(), &cs, 0.0).unwrap().count,
            ep_solve(&rs.theta, &cs, &EpConfig::for_profile(Profile::Linear)).unwrap().consensus,
        ];
        let am = AmConfig {
            max_iter: 3000,
            ..AmConfig::for_profile(Profile::Linear)
        };
        others.push(am_solve(&rs.theta, &cs, &am).unwrap().consensus);
        for c in others {
            assert!(c <= exact.best_consensus, "seed {seed}: {c} > {}", exact.best_consensus);
        }
    }
}

#[test]
fn consistent_data_reach_full_consensus() {
    let pts: Vec<(Vec<f64>, f64)> = (0..12).map(|j| (vec![j as f64 * 0.1, 1.0], 0.3 * j as f64 - 1.0)).collect();
    let data = maxcon::RegressionDataset::from_points(&pts).unwrap();
    let cs = build_linear_constraints(&data, 0.1).unwrap();
    assert_eq!(exact_max_consensus(&cs, 2).unwrap().best_consensus, 12);
}
