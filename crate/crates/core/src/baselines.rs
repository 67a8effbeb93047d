//! Initialisers and comparison methods: least squares, RANSAC, LO-RANSAC,
//! l1 slack minimisation and l-infinity outlier removal.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{consensus, ConstraintSet, FitResult, ModelParams, RegressionDataset};
use crate::penalty::v_max;
use crate::solvers::{solve_lp, LpProblem, LpStatus};

/// Largest accepted condition number of a minimal design.
pub const MAX_CONDITION: f64 = 1e10;

/// Least-squares solution of the stacked rows; minimum-norm when the design
/// is rank deficient.
pub fn least_squares(data: &RegressionDataset) -> Result<ModelParams> {
    let (theta, deficient) = lstsq(data, None)?;
    if deficient {
        log::warn!("least squares: rank-deficient design, returning the minimum-norm solution");
    }
    ModelParams::new(theta)
}

/// Returns the solution and whether the design was rank deficient.
fn lstsq(data: &RegressionDataset, rows: Option<&[usize]>) -> Result<(Vec<f64>, bool)> {
    let d = data.dim();
    let idx: Vec<usize> = rows.map_or_else(|| (0..data.len()).collect(), <[usize]>::to_vec);
    if idx.is_empty() {
        return Err(Error::TooFewData { needed: 1, found: 0 });
    }
    let x = DMatrix::from_fn(idx.len(), d, |r, c| data.x(idx[r])[c]);
    let y = DVector::from_fn(idx.len(), |r, _| data.y(idx[r]));
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * idx.len().max(d) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let theta = svd
        .solve(&y, tol)
        .map_err(|e| Error::Solver(format!("least squares: {e}")))?;
    Ok((theta.iter().copied().collect(), rank < d))
}

/// Condition-checked least-squares fit; `None` for degenerate designs.
fn conditioned_fit(data: &RegressionDataset, rows: &[usize]) -> Option<Vec<f64>> {
    let d = data.dim();
    if rows.len() < d {
        return None;
    }
    let x = DMatrix::from_fn(rows.len(), d, |r, c| data.x(rows[r])[c]);
    let sv = x.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return None;
    }
    let y = DVector::from_fn(rows.len(), |r, _| data.y(rows[r]));
    let svd = x.svd(true, true);
    let theta = svd.solve(&y, 0.0).ok()?;
    theta.iter().all(|t| t.is_finite()).then(|| theta.iter().copied().collect())
}

/// Produces model hypotheses from subsets of data.
pub trait HypothesisSource {
    fn num_data(&self) -> usize;
    fn min_subset(&self) -> usize;
    /// Model from the given data, or `None` for a degenerate subset.
    fn fit(&self, data: &[usize]) -> Option<ModelParams>;
}

/// Hypotheses from least-squares fits of regression rows, `rows_per_datum`
/// consecutive rows per datum, optionally mapped into another parameter
/// space.
pub struct LinearSource<'a> {
    pub data: &'a RegressionDataset,
    pub rows_per_datum: usize,
    pub map: Option<&'a (dyn Fn(&[f64]) -> Option<ModelParams> + Sync)>,
}

impl<'a> LinearSource<'a> {
    pub fn new(data: &'a RegressionDataset) -> Self {
        Self {
            data,
            rows_per_datum: 1,
            map: None,
        }
    }
}

impl HypothesisSource for LinearSource<'_> {
    fn num_data(&self) -> usize {
        self.data.len() / self.rows_per_datum
    }

    fn min_subset(&self) -> usize {
        self.data.dim().div_ceil(self.rows_per_datum)
    }

    fn fit(&self, data: &[usize]) -> Option<ModelParams> {
        let k = self.rows_per_datum;
        let rows: Vec<usize> = data.iter().flat_map(|&j| j * k..(j + 1) * k).collect();
        let theta = conditioned_fit(self.data, &rows)?;
        match self.map {
            Some(f) => f(&theta),
            None => ModelParams::new(theta).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub lo_inner_iters: usize,
    pub lo_subset_factor: usize,
    pub lo_trigger_fraction: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            confidence: 0.99,
            max_iters: 10_000,
            seed: 0,
            lo_inner_iters: 100,
            lo_subset_factor: 2,
            lo_trigger_fraction: 0.1,
        }
    }
}

impl RansacConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence", "must lie in (0, 1)"));
        }
        if self.max_iters == 0 || self.lo_subset_factor == 0 {
            return Err(invalid("max_iters", "counts must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lo_trigger_fraction) {
            return Err(invalid("lo_trigger_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Adaptive iteration bound `log(1 - conf) / log(1 - w^m)`.
pub fn ransac_bound(confidence: f64, inlier_ratio: f64, m: usize) -> f64 {
    let wm = inlier_ratio.powi(m as i32);
    if wm >= 1.0 {
        return 0.0;
    }
    let denom = (1.0 - wm).ln();
    if denom == 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / denom).ceil()
}

#[derive(Clone, Copy)]
enum LocalOpt {
    Off,
    On { improved: bool },
}

fn run_ransac(source: &dyn HypothesisSource, cs: &ConstraintSet, cfg: &RansacConfig, lo: LocalOpt) -> Result<FitResult> {
    let start = Instant::now();
    cfg.validate()?;
    let n = source.num_data();
    let m = source.min_subset();
    if n != cs.num_data() {
        return Err(Error::DimensionMismatch {
            what: "hypothesis source data",
            expected: cs.num_data(),
            found: n,
        });
    }
    if n < m {
        return Err(Error::TooFewData { needed: m, found: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, ModelParams, Vec<bool>)> = None;
    let mut bound = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iters && (iterations as f64) < bound {
        iterations += 1;
        let subset = sample(&mut rng, n, m).into_vec();
        let Some(theta) = source.fit(&subset) else {
            continue;
        };
        if theta.dim() + 1 != cs.dim_lifted() {
            return Err(Error::DimensionMismatch {
                what: "hypothesis",
                expected: cs.model_dim(),
                found: theta.dim(),
            });
        }
        let c = consensus(&theta, cs, 0.0)?;
        if best.as_ref().is_some_and(|(count, _, _)| c.count <= *count) {
            continue;
        }
        best = Some((c.count, theta, c.mask));
        if let LocalOpt::On { improved } = lo {
            let count = best.as_ref().map_or(0, |b| b.0);
            let gate = !improved || count as f64 > cfg.lo_trigger_fraction * n as f64;
            if gate {
                local_optimisation(source, cs, cfg, &mut rng, &mut best)?;
            }
        }
        let ratio = best.as_ref().map_or(0.0, |b| b.0 as f64 / n as f64);
        bound = ransac_bound(cfg.confidence, ratio, m);
    }
    let found = best.is_some();
    if !found {
        log::warn!("RANSAC: no non-degenerate subset within {} samples", cfg.max_iters);
    }
    let theta = best.map_or_else(|| ModelParams::zeros(cs.model_dim()), |b| b.1);
    let mut fit = FitResult::evaluate(theta, cs)?;
    fit.iterations = iterations;
    fit.converged = found;
    fit.wall_time = start.elapsed().as_secs_f64();
    Ok(fit)
}

fn local_optimisation(
    source: &dyn HypothesisSource,
    cs: &ConstraintSet,
    cfg: &RansacConfig,
    rng: &mut ChaCha8Rng,
    best: &mut Option<(usize, ModelParams, Vec<bool>)>,
) -> Result<()> {
    let size = cfg.lo_subset_factor * source.min_subset();
    for _ in 0..cfg.lo_inner_iters {
        let Some((count, _, mask)) = best.as_ref() else {
            return Ok(());
        };
        let inliers: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(j, _)| j).collect();
        if inliers.len() < size {
            return Ok(());
        }
        let count = *count;
        let pick: Vec<usize> = sample(rng, inliers.len(), size).into_iter().map(|k| inliers[k]).collect();
        let Some(theta) = source.fit(&pick) else {
            continue;
        };
        let c = consensus(&theta, cs, 0.0)?;
        if c.count > count {
            *best = Some((c.count, theta, c.mask));
        }
    }
    Ok(())
}

/// Plain RANSAC with the adaptive stopping bound.
pub fn ransac(source: &dyn HypothesisSource, cs: &ConstraintSet, cfg: &RansacConfig) -> Result<FitResult> {
    run_ransac(source, cs, cfg, LocalOpt::Off)
}

/// LO-RANSAC. With `improved`, the inner loop only runs when the new best
/// consensus exceeds `lo_trigger_fraction * N`.
pub fn lo_ransac(source: &dyn HypothesisSource, cs: &ConstraintSet, cfg: &RansacConfig, improved: bool) -> Result<FitResult> {
    run_ransac(source, cs, cfg, LocalOpt::On { improved })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Solution {
    pub v: Vec<f64>,
    /// One slack per datum.
    pub slacks: Vec<f64>,
    pub objective: f64,
    pub clipped: bool,
}

/// `min sum_j s_j  s.t.  c_i^T v - s_g(i) <= b_i,  s >= 0,  v >= 0`,
/// solved through its dual (one row per datum plus `d + 1` rows).
pub fn l1_solve(cs: &ConstraintSet) -> Result<L1Solution> {
    let (m, n, nd) = (cs.num_rows(), cs.dim_lifted(), cs.num_data());
    let rows = nd + n;
    let mut a = vec![0.0; rows * m];
    for (j, group) in cs.groups().iter().enumerate() {
        for &i in group {
            a[j * m + i] = 1.0;
        }
    }
    for i in 0..m {
        for (k, &c) in cs.row(i).iter().enumerate() {
            a[(nd + k) * m + i] = -c;
        }
    }
    let mut b = vec![1.0; nd];
    b.extend(std::iter::repeat_n(0.0, n));
    let sol = solve_lp(&LpProblem::new(cs.rhs_all().to_vec(), a, b))?;
    if !sol.is_optimal() {
        return Err(Error::Solver(format!("l1 fit: dual solve ended with {:?}", sol.status)));
    }
    let v: Vec<f64> = sol.duals[nd..].iter().map(|&x| x.max(0.0)).collect();
    let clipped = v.iter().any(|&x| x >= v_max(cs));
    let slacks: Vec<f64> = cs
        .groups()
        .iter()
        .map(|g| g.iter().map(|&i| cs.row_residual(i, &v)).fold(0.0, f64::max))
        .collect();
    Ok(L1Solution {
        objective: slacks.iter().sum(),
        v,
        slacks,
        clipped,
    })
}

pub fn l1_fit(cs: &ConstraintSet) -> Result<FitResult> {
    let start = Instant::now();
    let sol = l1_solve(cs)?;
    let mut fit = FitResult::evaluate(crate::model::recover_theta(&sol.v)?, cs)?;
    fit.iterations = 1;
    fit.tainted = sol.clipped;
    fit.wall_time = start.elapsed().as_secs_f64();
    Ok(fit)
}

fn linf_dual(cs: &ConstraintSet, vmax: Option<f64>) -> Result<crate::solvers::LpSolution> {
    let (m, n) = (cs.num_rows(), cs.dim_lifted());
    let cols = m + if vmax.is_some() { n } else { 0 };
    let rows = n + 2;
    let mut a = vec![0.0; rows * cols];
    for i in 0..m {
        for (k, &c) in cs.row(i).iter().enumerate() {
            a[k * cols + i] = -c;
        }
        a[n * cols + i] = 1.0;
        a[(n + 1) * cols + i] = -1.0;
    }
    let mut objective = cs.rhs_all().to_vec();
    if let Some(vmax) = vmax {
        for k in 0..n {
            a[k * cols + m + k] = -1.0;
        }
        objective.extend(std::iter::repeat_n(vmax, n));
    }
    let mut b = vec![0.0; n];
    b.extend([1.0, -1.0]);
    solve_lp(&LpProblem::new(objective, a, b))
}

/// `min gamma  s.t.  c_i^T v - gamma <= b_i,  v >= 0` over the given data,
/// through its dual. When the minimum is unbounded (possible for fractional
/// residuals) `v` is capped at `v_max`. Returns `(v, gamma, clipped)`.
pub fn linf_solve(cs: &ConstraintSet) -> Result<(Vec<f64>, f64, bool)> {
    let n = cs.dim_lifted();
    let mut sol = linf_dual(cs, None)?;
    let mut capped = false;
    if sol.status == LpStatus::Infeasible {
        sol = linf_dual(cs, Some(v_max(cs)))?;
        capped = true;
    }
    if !sol.is_optimal() {
        return Err(Error::Solver(format!("minimax fit: dual solve ended with {:?}", sol.status)));
    }
    let v: Vec<f64> = sol.duals[..n].iter().map(|&x| x.max(0.0)).collect();
    let clipped = capped && v.iter().any(|&x| x >= v_max(cs) * (1.0 - 1e-9));
    let gamma = (0..cs.num_rows()).map(|i| cs.row_residual(i, &v)).fold(f64::NEG_INFINITY, f64::max);
    Ok((v, gamma, clipped))
}

/// Repeatedly minimises the largest slack and removes every datum attaining
/// it until the largest slack is nonpositive.
pub fn linf_outlier_removal(cs: &ConstraintSet) -> Result<FitResult> {
    let start = Instant::now();
    let d = cs.model_dim();
    if cs.num_data() < d {
        return Err(Error::TooFewData {
            needed: d,
            found: cs.num_data(),
        });
    }
    let mut remaining: Vec<usize> = (0..cs.num_data()).collect();
    let mut iterations = 0;
    let mut tainted = false;
    let mut converged = false;
    let mut v;
    loop {
        iterations += 1;
        let sub = cs.select_data(&remaining);
        let (sv, gamma, clipped) = linf_solve(&sub)?;
        v = sv;
        tainted |= clipped;
        if gamma <= 0.0 {
            converged = true;
            break;
        }
        let cut = gamma - 1e-9 * (1.0 + gamma.abs());
        let keep: Vec<usize> = (0..sub.num_data())
            .filter(|&j| sub.group(j).iter().all(|&i| sub.row_residual(i, &v) < cut))
            .collect();
        debug_assert!(keep.len() < remaining.len());
        remaining = keep.into_iter().map(|j| remaining[j]).collect();
        if remaining.len() < d {
            log::warn!("minimax removal: fewer than {d} data remain");
            break;
        }
    }
    let mut fit = FitResult::evaluate(crate::model::recover_theta(&v)?, cs)?;
    fit.iterations = iterations;
    fit.converged = converged;
    fit.tainted = tainted;
    fit.wall_time = start.elapsed().as_secs_f64();
    Ok(fit)
}

/// Least-squares fit wrapped as a [`FitResult`] over `cs`.
pub fn least_squares_fit(data: &RegressionDataset, cs: &ConstraintSet) -> Result<FitResult> {
    let start = Instant::now();
    let theta = least_squares(data)?;
    let mut fit = FitResult::evaluate(theta, cs)?;
    fit.iterations = 1;
    fit.wall_time = start.elapsed().as_secs_f64();
    Ok(fit)
}
