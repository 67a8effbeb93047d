//! EP refiner: Frank-Wolfe on the penalised problem (alternating a weighted
//! LP in `(s, v)` and a closed-form update of `u`) inside an increasing
//! penalty schedule.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{
    complementarity_residual, consensus, init_state, penalty_value, ConstraintSet, FitResult, ModelParams, SolveState,
    TraceEntry,
};
use crate::profile::Profile;
use crate::solvers::{solve_lp_with_start, LpProblem, LpStart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpConfig {
    pub alpha0: f64,
    pub kappa: f64,
    /// Inner stop on `|P(t-1) - P(t)|`; `None` means `1e-8 (1 + |P(0)|)`.
    pub delta_fw: Option<f64>,
    /// Outer stop on `Q`; `None` means `1e-6 (1 + ||b||_inf)`.
    pub delta_q: Option<f64>,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Linear)
    }
}

impl EpConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (alpha0, kappa) = match profile {
            Profile::Linear | Profile::Fundamental | Profile::HomographyAlgebraic | Profile::Affinity => (0.5, 5.0),
            Profile::HomographyGeometric => (10.0, 1.5),
            Profile::Triangulation => (0.5, 1.5),
        };
        Self {
            alpha0,
            kappa,
            delta_fw: None,
            delta_q: None,
            max_outer: 50,
            max_inner: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(invalid("alpha0", "must be positive"));
        }
        if !(self.kappa > 1.0 && self.kappa.is_finite()) {
            return Err(invalid("kappa", "must exceed 1"));
        }
        for (name, v) in [("delta_fw", self.delta_fw), ("delta_q", self.delta_q)] {
            if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(invalid("max_outer", "iteration limits must be positive"));
        }
        Ok(())
    }

    pub fn delta_q_for(&self, cs: &ConstraintSet) -> f64 {
        self.delta_q.unwrap_or(1e-6 * (1.0 + cs.rhs_norm_inf()))
    }
}

/// Upper bound placed on every entry of `v` to keep the weighted LP bounded.
pub fn v_max(cs: &ConstraintSet) -> f64 {
    1e6 * (1.0 + cs.rhs_norm_inf() / cs.min_nonzero_abs().max(1e-12))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lp1Solution {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    /// `sum_i s_i - u_i (c_i^T v - b_i)` at the solution.
    pub objective: f64,
    /// The `v` upper bound is active.
    pub clipped: bool,
}

fn check_u(u: &[f64], cs: &ConstraintSet) -> Result<()> {
    if u.len() != cs.num_rows() {
        return Err(Error::DimensionMismatch {
            what: "u",
            expected: cs.num_rows(),
            found: u.len(),
        });
    }
    if u.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(invalid("u", "entries must lie in [0, 1]"));
    }
    Ok(())
}

/// The weighted LP in `(s, v)` stated directly: variables `[s; v]`,
/// rows `C v - s <= b`, bounds `s >= 0`, `0 <= v <= v_max`.
pub fn lp1_problem(u: &[f64], cs: &ConstraintSet) -> Result<LpProblem> {
    check_u(u, cs)?;
    let (m, n) = (cs.num_rows(), cs.dim_lifted());
    let nv = m + n;
    let mut objective = vec![1.0; m];
    objective.extend(lp1_v_cost(u, cs));
    let mut a = vec![0.0; m * nv];
    for i in 0..m {
        a[i * nv + i] = -1.0;
        a[i * nv + m..(i + 1) * nv].copy_from_slice(cs.row(i));
    }
    let mut upper = vec![f64::INFINITY; m];
    upper.extend(std::iter::repeat_n(v_max(cs), n));
    let mut guard = vec![false; m];
    guard.extend(std::iter::repeat_n(true, n));
    let mut p = LpProblem::new(objective, a, cs.rhs_all().to_vec()).with_bounds(vec![0.0; nv], upper);
    p.guard = guard;
    Ok(p)
}

/// `-C^T u`.
fn lp1_v_cost(u: &[f64], cs: &ConstraintSet) -> Vec<f64> {
    let mut cost = vec![0.0; cs.dim_lifted()];
    for (i, &ui) in u.iter().enumerate() {
        if ui != 0.0 {
            for (c, a) in cost.iter_mut().zip(cs.row(i)) {
                *c -= ui * a;
            }
        }
    }
    cost
}

/// Minimises `sum_i s_i - u_i (c_i^T v - b_i)` over `s >= C v - b`,
/// `s >= 0`, `v >= 0` for fixed `u`.
///
/// Solved through the dual, which has only `d + 1` rows: variables
/// `lambda in [0, 1]^M`, rows `-C^T lambda <= -C^T u`. Its row multipliers
/// are the primal `v`; `lambda = u` is a feasible start. The objective is
/// bounded below by zero, so no bound on `v` is needed.
pub fn lp1_update(u: &[f64], cs: &ConstraintSet) -> Result<Lp1Solution> {
    check_u(u, cs)?;
    let (m, n) = (cs.num_rows(), cs.dim_lifted());
    let rhs = lp1_v_cost(u, cs);
    let mut a = vec![0.0; n * m];
    for i in 0..m {
        for (k, &c) in cs.row(i).iter().enumerate() {
            a[k * m + i] = -c;
        }
    }
    let dual = LpProblem::new(cs.rhs_all().to_vec(), a, rhs).with_bounds(vec![0.0; m], vec![1.0; m]);
    let start = LpStart {
        at_upper: u.iter().map(|&x| x >= 0.5).collect(),
    };
    let sol = solve_lp_with_start(&dual, &start)?;
    if !sol.is_optimal() {
        return Err(Error::Solver(format!("weighted LP: dual solve ended with {:?}", sol.status)));
    }
    let v: Vec<f64> = sol.duals.iter().map(|&x| x.max(0.0)).collect();
    let clipped = v.iter().any(|&x| x >= v_max(cs));
    let s: Vec<f64> = (0..m).map(|i| cs.row_residual(i, &v).max(0.0)).collect();
    let objective = (0..m).map(|i| s[i] - u[i] * cs.row_residual(i, &v)).sum();
    Ok(Lp1Solution { s, v, objective, clipped })
}

/// Whether `(s, v)` with `s = max(0, Cv - b)` is a vertex of the weighted LP
/// polytope: the rows with zero residual together with the active bounds on
/// `v` must span the lifted space.
pub fn lp1_is_vertex(cs: &ConstraintSet, v: &[f64], tol: f64) -> bool {
    let n = cs.dim_lifted();
    let vmax = v_max(cs);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..cs.num_rows() {
        if cs.row_residual(i, v).abs() <= tol * (1.0 + cs.rhs(i).abs()) {
            rows.push(cs.row(i).to_vec());
        }
    }
    for (k, &x) in v.iter().enumerate() {
        if x <= tol || x >= vmax * (1.0 - 1e-9) {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            rows.push(e);
        }
    }
    if rows.len() < n {
        return false;
    }
    let mat = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    mat.rank(1e-9) == n
}

/// `u_i = 1` iff `1 - alpha (c_i^T v - b_i) <= 0`.
pub fn lp2_update(v: &[f64], cs: &ConstraintSet, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha >= 0.0) {
        return Err(invalid("alpha", "must be nonnegative"));
    }
    if v.len() != cs.dim_lifted() {
        return Err(Error::DimensionMismatch {
            what: "v",
            expected: cs.dim_lifted(),
            found: v.len(),
        });
    }
    Ok((0..cs.num_rows())
        .map(|i| if 1.0 - alpha * cs.row_residual(i, v) <= 0.0 { 1.0 } else { 0.0 })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwOutcome {
    pub state: SolveState,
    /// Penalty values, starting with the value at the initial state.
    pub penalties: Vec<f64>,
    pub iterations: usize,
    /// Stopped on `|dP| <= delta_fw` rather than the iteration cap.
    pub converged: bool,
    pub clipped: bool,
    /// Weighted-LP solutions that failed the vertex check.
    pub non_vertex: usize,
}

/// Frank-Wolfe iterations at fixed `alpha`.
pub fn frank_wolfe(z0: &SolveState, alpha: f64, cs: &ConstraintSet, cfg: &EpConfig) -> Result<FwOutcome> {
    cfg.validate()?;
    z0.check_dims(cs)?;
    let p0 = penalty_value(z0, cs, alpha);
    let delta = cfg.delta_fw.unwrap_or(1e-8 * (1.0 + p0.abs()));
    let slack = 1e-9 * (1.0 + p0.abs());
    let mut z = z0.clone();
    let mut penalties = vec![p0];
    let mut clipped = false;
    let mut non_vertex = 0;
    for t in 1..=cfg.max_inner {
        let lp1 = lp1_update(&z.u, cs)?;
        clipped |= lp1.clipped;
        if !lp1_is_vertex(cs, &lp1.v, 1e-8) {
            non_vertex += 1;
            log::warn!("weighted LP solution is not a vertex");
        }
        let u = lp2_update(&lp1.v, cs, alpha)?;
        z = SolveState { u, s: lp1.s, v: lp1.v };
        let p = penalty_value(&z, cs, alpha);
        let prev = penalties[penalties.len() - 1];
        penalties.push(p);
        if p > prev + slack {
            return Err(Error::Invariant(format!(
                "penalty increased from {prev} to {p} at inner iteration {t}"
            )));
        }
        if (prev - p).abs() <= delta {
            return Ok(FwOutcome {
                state: z,
                penalties,
                iterations: t,
                converged: true,
                clipped,
                non_vertex,
            });
        }
    }
    Ok(FwOutcome {
        state: z,
        penalties,
        iterations: cfg.max_inner,
        converged: false,
        clipped,
        non_vertex,
    })
}

/// Full EP run with per-call inner diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpReport {
    pub fit: FitResult,
    pub state: SolveState,
    pub inner: Vec<FwOutcome>,
    pub alphas: Vec<f64>,
}

pub fn ep_solve(theta0: &ModelParams, cs: &ConstraintSet, cfg: &EpConfig) -> Result<FitResult> {
    ep_solve_report(theta0, cs, cfg).map(|r| r.fit)
}

pub fn ep_solve_report(theta0: &ModelParams, cs: &ConstraintSet, cfg: &EpConfig) -> Result<EpReport> {
    let start = Instant::now();
    cfg.validate()?;
    let delta_q = cfg.delta_q_for(cs);
    let mut z = init_state(theta0, cs)?;
    let mut alpha = cfg.alpha0;
    let mut trace = Vec::new();
    let mut inner = Vec::new();
    let mut alphas = Vec::new();
    let mut tainted = false;
    let mut converged = false;
    let mut iterations = 0;
    let mut best = (consensus(theta0, cs, 0.0)?.count, theta0.clone());
    for _ in 0..cfg.max_outer {
        let out = frank_wolfe(&z, alpha, cs, cfg)?;
        tainted |= out.clipped;
        z = out.state.clone();
        let q = complementarity_residual(&z, cs);
        for (k, &p) in out.penalties.iter().enumerate().skip(1) {
            trace.push(TraceEntry {
                iteration: iterations + k,
                objective: p,
                residual: if k == out.penalties.len() - 1 { q } else { f64::NAN },
            });
        }
        iterations += out.iterations;
        alphas.push(alpha);
        inner.push(out);
        let theta = z.theta()?;
        let count = consensus(&theta, cs, 0.0)?.count;
        if count > best.0 {
            best = (count, theta);
        }
        if q <= delta_q {
            converged = true;
            break;
        }
        alpha *= cfg.kappa;
    }
    // Intermediate trace points carry no Q; fill them for a finite trace.
    let mut last_q = complementarity_residual(&z, cs);
    for e in trace.iter_mut().rev() {
        if e.residual.is_nan() {
            e.residual = last_q;
        } else {
            last_q = e.residual;
        }
    }
    if tainted {
        log::warn!("EP: the v upper bound was active in at least one weighted LP");
    }
    let theta = if converged { z.theta()? } else { best.1 };
    let mut fit = FitResult::evaluate(theta, cs)?;
    fit.iterations = iterations;
    fit.trace = trace;
    fit.converged = converged;
    fit.tainted = tainted;
    fit.wall_time = start.elapsed().as_secs_f64();
    Ok(EpReport {
        fit,
        state: z,
        inner,
        alphas,
    })
}
