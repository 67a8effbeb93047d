#![allow(dead_code)]

use maxcon::reformulate::build_linear_constraints;
use maxcon::{ConstraintSet, RegressionDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Line-fitting data with an offset column: `x = [x_1 .. x_{d-1}, 1]`.
pub fn linear_instance(n: usize, d: usize, outlier_fraction: f64, balanced: bool, seed: u64) -> RegressionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let out = Normal::new(0.0, 1.0).unwrap();
    let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..n {
        let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        x[d - 1] = 1.0;
        let mut y: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng);
        if (j as f64) < outlier_fraction * n as f64 {
            let p: f64 = out.sample(&mut rng);
            y += if !balanced || j % 2 == 0 { p.abs() } else { -p.abs() };
        }
        xs.extend(x);
        ys.push(y);
    }
    RegressionDataset::from_rows(d, xs, ys).unwrap()
}

pub fn linear_constraints(n: usize, d: usize, outlier_fraction: f64, seed: u64) -> (RegressionDataset, ConstraintSet) {
    let data = linear_instance(n, d, outlier_fraction, true, seed);
    let cs = build_linear_constraints(&data, 0.1).unwrap();
    (data, cs)
}
