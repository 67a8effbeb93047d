//! Seeded synthetic data: linear regression with balanced or one-sided
//! outliers, plus two-view matches and multi-view tracks with known models.

use anyhow::{ensure, Result};
use maxcon::reformulate::{PointMatch, TrackObservation};
use maxcon::RegressionDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Standard deviation of the outlier perturbation.
pub const SIGMA_OUT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub sigma_in: f64,
    pub outlier_fraction: f64,
    pub balanced: bool,
    pub seed: u64,
    pub epsilon: f64,
    /// Fix the last regressor at 1 so the model carries an offset term.
    pub intercept: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 500,
            d: 8,
            sigma_in: 0.1,
            outlier_fraction: 0.4,
            balanced: true,
            seed: 0,
            epsilon: 0.1,
            intercept: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n > 0 && self.d > 0, "n and d must be positive");
        ensure!(self.sigma_in > 0.0, "sigma_in must be positive");
        ensure!(self.epsilon > 0.0, "epsilon must be positive");
        ensure!(
            (0.0..=1.0).contains(&self.outlier_fraction),
            "outlier_fraction must lie in [0, 1]"
        );
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthLinear {
    pub data: RegressionDataset,
    pub theta: Vec<f64>,
    /// Data that were not re-perturbed.
    pub clean: Vec<bool>,
    /// Signed outlier perturbations, zero for clean data.
    pub perturbation: Vec<f64>,
}

pub fn synth_linear(cfg: &SynthConfig) -> Result<SynthLinear> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.sigma_in)?;
    let out = Normal::new(0.0, SIGMA_OUT)?;
    let theta: Vec<f64> = (0..cfg.d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut xs = Vec::with_capacity(cfg.n * cfg.d);
    let mut ys = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let mut x: Vec<f64> = (0..cfg.d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if cfg.intercept {
            x[cfg.d - 1] = 1.0;
        }
        let y = x.iter().zip(&theta).map(|(a, t)| a * t).sum::<f64>() + noise.sample(&mut rng);
        xs.extend(x);
        ys.push(y);
    }
    let n_out = (cfg.outlier_fraction * cfg.n as f64).round() as usize;
    let picked = rand::seq::index::sample(&mut rng, cfg.n, n_out).into_vec();
    let mut clean = vec![true; cfg.n];
    let mut perturbation = vec![0.0; cfg.n];
    for (k, &j) in picked.iter().enumerate() {
        let mag = out.sample(&mut rng);
        // Balanced outliers alternate sides; unbalanced ones all sit above.
        let p = if cfg.balanced {
            if k % 2 == 0 {
                mag.abs()
            } else {
                -mag.abs()
            }
        } else {
            mag.abs()
        };
        ys[j] += p;
        clean[j] = false;
        perturbation[j] = p;
    }
    Ok(SynthLinear {
        data: RegressionDataset::from_rows(cfg.d, xs, ys)?,
        theta,
        clean,
        perturbation,
    })
}

/// Planar homography scene: `n` matches, a fraction of which get their
/// second point displaced by 20 to 100 pixels.
#[derive(Debug, Clone)]
pub struct SynthMatches {
    pub matches: Vec<PointMatch>,
    pub h: [[f64; 3]; 3],
    pub clean: Vec<bool>,
}

fn apply_h(h: &[[f64; 3]; 3], p: [f64; 2]) -> [f64; 2] {
    let w = h[2][0] * p[0] + h[2][1] * p[1] + h[2][2];
    [
        (h[0][0] * p[0] + h[0][1] * p[1] + h[0][2]) / w,
        (h[1][0] * p[0] + h[1][1] * p[1] + h[1][2]) / w,
    ]
}

pub fn synth_homography(n: usize, outlier_fraction: f64, sigma: f64, seed: u64) -> Result<SynthMatches> {
    synth_planar(n, outlier_fraction, sigma, seed, true)
}

/// As [`synth_homography`] with the projective row fixed at `[0, 0, 1]`.
pub fn synth_affinity(n: usize, outlier_fraction: f64, sigma: f64, seed: u64) -> Result<SynthMatches> {
    synth_planar(n, outlier_fraction, sigma, seed, false)
}

fn synth_planar(n: usize, outlier_fraction: f64, sigma: f64, seed: u64, perspective: bool) -> Result<SynthMatches> {
    ensure!(n > 0, "n must be positive");
    ensure!((0.0..=1.0).contains(&outlier_fraction), "outlier_fraction must lie in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0))?;
    let a = rng.random_range(-0.2..0.2f64);
    let mut h = [
        [a.cos() * 1.05, -a.sin(), rng.random_range(-30.0..30.0)],
        [a.sin(), a.cos() * 0.95, rng.random_range(-30.0..30.0)],
        [rng.random_range(-2e-4..2e-4), rng.random_range(-2e-4..2e-4), 1.0],
    ];
    if !perspective {
        h[2] = [0.0, 0.0, 1.0];
    }
    let n_out = (outlier_fraction * n as f64).round() as usize;
    let bad = rand::seq::index::sample(&mut rng, n, n_out).into_vec();
    let mut clean = vec![true; n];
    for &j in &bad {
        clean[j] = false;
    }
    let mut matches = Vec::with_capacity(n);
    for &ok in &clean {
        let p = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
        let mut q = apply_h(&h, p);
        if ok {
            q[0] += noise.sample(&mut rng);
            q[1] += noise.sample(&mut rng);
        } else {
            let r = rng.random_range(20.0..100.0);
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            q[0] += r * t.cos();
            q[1] += r * t.sin();
        }
        matches.push(PointMatch { u: p, v: q });
    }
    Ok(SynthMatches { matches, h, clean })
}

/// Two views of a random 3D point cloud (non-planar, so the fundamental
/// matrix is well defined). Outliers get their second point displaced by 20
/// to 100 pixels.
pub fn synth_two_view(n: usize, outlier_fraction: f64, sigma: f64, seed: u64) -> Result<SynthMatches> {
    ensure!(n > 0, "n must be positive");
    ensure!((0.0..=1.0).contains(&outlier_fraction), "outlier_fraction must lie in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0))?;
    let (f, cx, cy) = (500.0, 320.0, 240.0);
    let a = rng.random_range(0.05..0.15f64);
    let (sa, ca) = a.sin_cos();
    // Second camera: rotation about y, then a sideways baseline.
    let r = [[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]];
    let t = [-1.0, rng.random_range(-0.1..0.1), 0.0];
    let n_out = (outlier_fraction * n as f64).round() as usize;
    let bad = rand::seq::index::sample(&mut rng, n, n_out).into_vec();
    let mut clean = vec![true; n];
    for &j in &bad {
        clean[j] = false;
    }
    let project = |p: [f64; 3]| [f * p[0] / p[2] + cx, f * p[1] / p[2] + cy];
    let mut matches = Vec::with_capacity(n);
    for &ok in &clean {
        let p = [
            rng.random_range(-2.5..2.5),
            rng.random_range(-2.0..2.0),
            rng.random_range(5.0..10.0),
        ];
        let q: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| r[i][j] * p[j]).sum::<f64>() + t[i]);
        let u = project(p);
        let mut v = project(q);
        if ok {
            v[0] += noise.sample(&mut rng);
            v[1] += noise.sample(&mut rng);
        } else {
            let rad = rng.random_range(20.0..100.0);
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            v[0] += rad * ang.cos();
            v[1] += rad * ang.sin();
        }
        matches.push(PointMatch { u, v });
    }
    // No homography relates the views; `h` holds the identity.
    let h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    Ok(SynthMatches { matches, h, clean })
}

/// A point observed by `views` cameras on a circle looking at the origin.
#[derive(Debug, Clone)]
pub struct SynthTrack {
    pub observations: Vec<TrackObservation>,
    pub point: [f64; 3],
    pub clean: Vec<bool>,
}

pub fn synth_track(views: usize, outlier_fraction: f64, sigma: f64, seed: u64) -> Result<SynthTrack> {
    ensure!(views >= 2, "need at least two views");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0))?;
    let point = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    let n_out = (outlier_fraction * views as f64).round() as usize;
    let bad = rand::seq::index::sample(&mut rng, views, n_out).into_vec();
    let mut clean = vec![true; views];
    for &j in &bad {
        clean[j] = false;
    }
    let f = 500.0;
    let mut observations = Vec::with_capacity(views);
    for (k, &ok) in clean.iter().enumerate() {
        let t = std::f64::consts::TAU * k as f64 / views as f64;
        let (sn, cs) = t.sin_cos();
        // Camera at 10 (cos t, 0, sin t), optical axis towards the origin.
        let r = [[sn, 0.0, -cs], [0.0, 1.0, 0.0], [-cs, 0.0, -sn]];
        let centre = [10.0 * cs, 0.0, 10.0 * sn];
        let mut p = [[0.0; 4]; 3];
        for i in 0..3 {
            let k_row = if i == 2 { 1.0 } else { f };
            let tr = -(0..3).map(|j| r[i][j] * centre[j]).sum::<f64>();
            for j in 0..3 {
                p[i][j] = k_row * r[i][j];
            }
            p[i][3] = k_row * tr;
        }
        let h: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| p[i][j] * point[j]).sum::<f64>() + p[i][3])
            .collect();
        let mut x = [h[0] / h[2], h[1] / h[2]];
        if ok {
            x[0] += noise.sample(&mut rng);
            x[1] += noise.sample(&mut rng);
        } else {
            x[0] += rng.random_range(20.0..60.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            x[1] += rng.random_range(20.0..60.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        observations.push(TrackObservation { x, camera: p });
    }
    Ok(SynthTrack {
        observations,
        point,
        clean,
    })
}
