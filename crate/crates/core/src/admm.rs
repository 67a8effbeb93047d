//! AM refiner: ADMM over per-row auxiliary blocks, a convex coupling block
//! and the shared primal block, with a geometrically increasing penalty.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{consensus, init_state, ConstraintSet, FitResult, ModelParams, SolveState, TraceEntry};
use crate::profile::Profile;
use crate::solvers::{project_coupling, solve_rank_one_qp, CouplingStart, WorkingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmConfig {
    pub rho0: f64,
    pub sigma: f64,
    /// Stop once `||z(t) - z(t-1)|| <= delta` and the coupling residual is
    /// at most `delta / 10`; `None` means `1e-6 (1 + ||b||_inf)`.
    pub delta: Option<f64>,
    pub rho_max: f64,
    pub max_iter: usize,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Linear)
    }
}

impl AmConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (rho0, sigma) = match profile {
            Profile::Linear | Profile::Fundamental | Profile::HomographyAlgebraic | Profile::Triangulation => {
                (0.1, 2.5)
            }
            Profile::HomographyGeometric => (0.1, 1.5),
            Profile::Affinity => (0.5, 2.5),
        };
        Self {
            rho0,
            sigma,
            delta: None,
            rho_max: 1e8,
            max_iter: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0 <= 10.0) {
            return Err(invalid("rho0", "must lie in (0, 10]"));
        }
        if !(1.01..=5.0).contains(&self.sigma) {
            return Err(invalid("sigma", "must lie in [1.01, 5]"));
        }
        if self.delta.is_some_and(|d| !(d > 0.0 && d.is_finite())) {
            return Err(invalid("delta", "must be positive"));
        }
        if !(self.rho_max >= self.rho0 && self.rho_max.is_finite()) {
            return Err(invalid("rho_max", "must be finite and at least rho0"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be positive"));
        }
        Ok(())
    }

    pub fn delta_for(&self, cs: &ConstraintSet) -> f64 {
        self.delta.unwrap_or(1e-6 * (1.0 + cs.rhs_norm_inf()))
    }
}

/// All ADMM blocks. Per-row vectors are stored row-major (`M x (d+1)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub z: SolveState,
    pub aux_u: Vec<f64>,
    pub aux_s: Vec<f64>,
    pub aux_v: Vec<f64>,
    pub coupling_s: Vec<f64>,
    pub coupling_v: Vec<f64>,
    pub lambda_u: Vec<f64>,
    pub lambda_s: Vec<f64>,
    pub lambda_cs: Vec<f64>,
    pub lambda_cv: Vec<f64>,
    pub lambda_v: Vec<f64>,
    #[serde(skip)]
    working: Option<WorkingSet>,
}

impl AdmmState {
    /// Auxiliary blocks copied from `z`, coupling block `(s, v)`, zero duals.
    pub fn new(z: SolveState, cs: &ConstraintSet) -> Result<Self> {
        z.check_dims(cs)?;
        let m = cs.num_rows();
        let n = cs.dim_lifted();
        let aux_v = z.v.iter().copied().cycle().take(m * n).collect();
        Ok(Self {
            aux_u: z.u.clone(),
            aux_s: z.s.clone(),
            aux_v,
            coupling_s: z.s.clone(),
            coupling_v: z.v.clone(),
            lambda_u: vec![0.0; m],
            lambda_s: vec![0.0; m],
            lambda_cs: vec![0.0; m],
            lambda_cv: vec![0.0; n],
            lambda_v: vec![0.0; m * n],
            working: None,
            z,
        })
    }

    pub fn dim(&self) -> usize {
        self.z.v.len()
    }

    pub fn aux_v_row(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.aux_v[i * n..(i + 1) * n]
    }

    pub fn lambda_v_row(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.lambda_v[i * n..(i + 1) * n]
    }

    /// The primal block clamped into `u in [0, 1]`, `s, v >= 0`.
    pub fn exported(&self) -> SolveState {
        SolveState {
            u: self.z.u.iter().map(|x| x.clamp(0.0, 1.0)).collect(),
            s: self.z.s.iter().map(|x| x.max(0.0)).collect(),
            v: self.z.v.iter().map(|x| x.max(0.0)).collect(),
        }
    }

    /// Largest absolute entry over all coupling residuals
    /// `u' - u, s' - s, s_C - s, v_C - v, v'_i - v`.
    pub fn coupling_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..self.z.u.len() {
            worst = worst
                .max((self.aux_u[i] - self.z.u[i]).abs())
                .max((self.aux_s[i] - self.z.s[i]).abs())
                .max((self.coupling_s[i] - self.z.s[i]).abs());
            for k in 0..n {
                worst = worst.max((self.aux_v[i * n + k] - self.z.v[k]).abs());
            }
        }
        for k in 0..n {
            worst = worst.max((self.coupling_v[k] - self.z.v[k]).abs());
        }
        worst
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

/// Minimises the augmented Lagrangian over each auxiliary block by
/// enumerating `u'_i in {0, 1}`.
pub fn update_aux(state: &mut AdmmState, rho: f64, cs: &ConstraintSet) -> Result<()> {
    if !(rho > 0.0) {
        return Err(invalid("rho", "must be positive"));
    }
    let n = state.dim();
    for i in 0..cs.num_rows() {
        let (ui, si) = (state.z.u[i], state.z.s[i]);
        let (lu, ls) = (state.lambda_u[i], state.lambda_s[i]);
        let w: Vec<f64> = state.z.v.iter().zip(state.lambda_v_row(i)).map(|(v, l)| v - l).collect();
        let obj0 = rho * sq(lu - ui) + rho * sq(ls - si);
        let c = cs.row(i);
        let mut v1 = solve_rank_one_qp(c, cs.rhs(i) + si - ls, &w)?;
        let mut s1 = cs.row_residual(i, &v1);
        let cc: f64 = c.iter().map(|x| x * x).sum();
        let feasible = s1 >= 0.0 || cc > 0.0;
        if s1 < 0.0 && cc > 0.0 {
            // The slack bound is active: the best branch-1 point lies on
            // the row's boundary.
            let step = -cs.row_residual(i, &w) / cc;
            v1 = w.iter().zip(c).map(|(w, c)| w + step * c).collect();
            s1 = 0.0;
        }
        let take_one = feasible && {
            let dv: f64 = v1.iter().zip(&w).map(|(a, b)| sq(a - b)).sum();
            let obj1 = 1.0 + rho * sq(1.0 - ui + lu) + rho * sq(s1 - si + ls) + rho * dv;
            obj1 < obj0
        };
        let row = &mut state.aux_v[i * n..(i + 1) * n];
        if take_one {
            state.aux_u[i] = 1.0;
            state.aux_s[i] = s1;
            row.copy_from_slice(&v1);
        } else {
            state.aux_u[i] = 0.0;
            state.aux_s[i] = 0.0;
            row.copy_from_slice(&w);
        }
    }
    Ok(())
}

/// Projects `(s - lambda_C^s, v - lambda_C^v)` onto the coupling set.
pub fn update_coupling(state: &mut AdmmState, cs: &ConstraintSet) -> Result<()> {
    let ts: Vec<f64> = state.z.s.iter().zip(&state.lambda_cs).map(|(s, l)| s - l).collect();
    let tv: Vec<f64> = state.z.v.iter().zip(&state.lambda_cv).map(|(v, l)| v - l).collect();
    let start = CouplingStart {
        s: &state.coupling_s,
        v: &state.coupling_v,
        working: state.working.as_ref(),
    };
    let sol = project_coupling(cs, &ts, &tv, Some(start))?;
    state.coupling_s = sol.s;
    state.coupling_v = sol.v;
    state.working = Some(sol.working);
    Ok(())
}

/// Closed-form minimiser of the augmented Lagrangian in `z`.
pub fn update_primal(state: &mut AdmmState, rho: f64) -> Result<()> {
    if !(rho > 0.0) {
        return Err(invalid("rho", "must be positive"));
    }
    let m = state.z.u.len();
    let n = state.dim();
    let shrink = rho / (rho + 1.0);
    for i in 0..m {
        state.z.u[i] = shrink * (state.aux_u[i] + state.lambda_u[i]);
        state.z.s[i] = 0.5 * (state.aux_s[i] + state.lambda_s[i] + state.coupling_s[i] + state.lambda_cs[i]);
    }
    for k in 0..n {
        let mut acc = state.coupling_v[k] + state.lambda_cv[k];
        for i in 0..m {
            acc += state.aux_v[i * n + k] + state.lambda_v[i * n + k];
        }
        state.z.v[k] = acc / (m + 1) as f64;
    }
    if state.z.s.iter().chain(&state.z.v).any(|&x| x < 0.0) {
        log::trace!("AM: negative entries in the primal block after the mean update");
    }
    Ok(())
}

/// Adds each block's coupling residual to its scaled dual.
pub fn update_duals(state: &mut AdmmState) {
    let m = state.z.u.len();
    let n = state.dim();
    for i in 0..m {
        state.lambda_u[i] += state.aux_u[i] - state.z.u[i];
        state.lambda_s[i] += state.aux_s[i] - state.z.s[i];
        state.lambda_cs[i] += state.coupling_s[i] - state.z.s[i];
        for k in 0..n {
            state.lambda_v[i * n + k] += state.aux_v[i * n + k] - state.z.v[k];
        }
    }
    for k in 0..n {
        state.lambda_cv[k] += state.coupling_v[k] - state.z.v[k];
    }
}

fn blocks_feasible(state: &AdmmState, cs: &ConstraintSet) -> bool {
    let scale = 1.0 + cs.rhs_norm_inf();
    let tol = 1e-10 * scale;
    for i in 0..cs.num_rows() {
        let (u, s) = (state.aux_u[i], state.aux_s[i]);
        if !(u == 0.0 || u == 1.0) || s < 0.0 {
            return false;
        }
        let r = cs.row_residual(i, state.aux_v_row(i));
        if (u * (s - r)).abs() > tol * (1.0 + r.abs()) || (s * (1.0 - u)).abs() > tol {
            return false;
        }
    }
    let ctol = 1e-8 * scale;
    if state.coupling_v.iter().any(|&x| x < -ctol) {
        return false;
    }
    (0..cs.num_rows()).all(|i| {
        state.coupling_s[i] >= -ctol && cs.row_residual(i, &state.coupling_v) - state.coupling_s[i] <= ctol
    })
}

/// Augmented Lagrangian value; `+inf` when an indicator is violated.
pub fn augmented_lagrangian(state: &AdmmState, rho: f64, cs: &ConstraintSet) -> f64 {
    if !blocks_feasible(state, cs) {
        return f64::INFINITY;
    }
    let m = state.z.u.len();
    let n = state.dim();
    let mut value: f64 = state.aux_u.iter().sum::<f64>() + state.z.u.iter().map(|&u| u * u).sum::<f64>();
    let mut pen = 0.0;
    for i in 0..m {
        pen += sq(state.aux_u[i] - state.z.u[i] + state.lambda_u[i]) - sq(state.lambda_u[i]);
        pen += sq(state.aux_s[i] - state.z.s[i] + state.lambda_s[i]) - sq(state.lambda_s[i]);
        pen += sq(state.coupling_s[i] - state.z.s[i] + state.lambda_cs[i]) - sq(state.lambda_cs[i]);
        for k in 0..n {
            let l = state.lambda_v[i * n + k];
            pen += sq(state.aux_v[i * n + k] - state.z.v[k] + l) - sq(l);
        }
    }
    for k in 0..n {
        pen += sq(state.coupling_v[k] - state.z.v[k] + state.lambda_cv[k]) - sq(state.lambda_cv[k]);
    }
    value += rho * pen;
    value
}

/// Length of the monotone run that marks the onset of monotonic behaviour.
pub const MONOTONE_RUN: usize = 5;

/// Penalty at the first cycle that starts [`MONOTONE_RUN`] consecutive
/// non-increasing cycles (or a shorter run reaching the final cycle).
pub fn monotone_onset(rhos: &[f64], monotone: &[bool]) -> Option<f64> {
    let len = monotone.len();
    (0..len)
        .find(|&t| {
            let end = (t + MONOTONE_RUN).min(len);
            monotone[t..end].iter().all(|&m| m)
        })
        .map(|t| rhos[t])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmReport {
    pub fit: FitResult,
    pub state: AdmmState,
    /// Penalty used in each cycle.
    pub rhos: Vec<f64>,
    /// Whether the augmented Lagrangian (at that cycle's penalty) did not
    /// increase over the cycle.
    pub monotone: Vec<bool>,
    pub rho_star: Option<f64>,
    pub coupling_residual: f64,
}

impl AmReport {
    /// Whether every cycle from the recorded onset on was non-increasing.
    pub fn monotone_after_onset(&self) -> bool {
        match self.rho_star {
            None => false,
            Some(r) => {
                let start = self.rhos.iter().position(|&x| x == r).unwrap_or(0);
                self.monotone[start..].iter().all(|&m| m)
            }
        }
    }
}

pub fn am_solve(theta0: &ModelParams, cs: &ConstraintSet, cfg: &AmConfig) -> Result<FitResult> {
    am_solve_report(theta0, cs, cfg).map(|r| r.fit)
}

pub fn am_solve_report(theta0: &ModelParams, cs: &ConstraintSet, cfg: &AmConfig) -> Result<AmReport> {
    let start = Instant::now();
    cfg.validate()?;
    let delta = cfg.delta_for(cs);
    let mut state = AdmmState::new(init_state(theta0, cs)?, cs)?;
    let mut rho = cfg.rho0;
    let mut rhos = Vec::new();
    let mut monotone = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut best = (consensus(theta0, cs, 0.0)?.count, theta0.clone());
    let mut iterations = 0;
    for t in 1..=cfg.max_iter {
        iterations = t;
        let before = augmented_lagrangian(&state, rho, cs);
        let prev = state.z.clone();
        update_aux(&mut state, rho, cs)?;
        update_coupling(&mut state, cs)?;
        update_primal(&mut state, rho)?;
        update_duals(&mut state);
        let after = augmented_lagrangian(&state, rho, cs);
        if !after.is_finite() {
            return Err(Error::Invariant("AM: block left its feasible set".into()));
        }
        rhos.push(rho);
        monotone.push(after <= before + 1e-8 * (1.0 + before.abs()));
        trace.push(TraceEntry {
            iteration: t,
            objective: after,
            residual: state.coupling_residual(),
        });
        let theta = state.z.theta()?;
        let count = consensus(&theta, cs, 0.0)?.count;
        if count > best.0 {
            best = (count, theta);
        }
        if state.z.distance(&prev) <= delta && state.coupling_residual() <= 0.1 * delta {
            converged = true;
            break;
        }
        rho = (rho * cfg.sigma).min(cfg.rho_max);
    }
    let rho_star = monotone_onset(&rhos, &monotone);
    match rho_star {
        Some(r) => log::info!("AM: augmented Lagrangian monotone from rho = {r:.3e}"),
        None => log::info!("AM: no monotone onset observed"),
    }
    let theta = if converged { state.z.theta()? } else { best.1 };
    let mut fit = FitResult::evaluate(theta, cs)?;
    fit.iterations = iterations;
    fit.trace = trace;
    fit.converged = converged;
    fit.wall_time = start.elapsed().as_secs_f64();
    Ok(AmReport {
        fit,
        coupling_residual: state.coupling_residual(),
        state,
        rhos,
        monotone,
        rho_star,
    })
}
