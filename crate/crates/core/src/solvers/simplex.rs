//! Dense bounded-variable primal simplex.
//!
//! Problems are `min c^T x` subject to `A x <= b` and `lower <= x <= upper`.
//! Each row gets a slack `w_r >= 0`; the tableau stores `B^-1 [A I]`.
//! Phase 1 uses one artificial column per row whose slack starts infeasible.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 50;

/// `min c^T x  s.t.  A x <= b,  lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Row-major `m x n`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Lower bounds, `-inf` for free variables.
    pub lower: Vec<f64>,
    /// Upper bounds, `+inf` when absent.
    pub upper: Vec<f64>,
    /// Upper bounds that only guard against unboundedness; an active guard
    /// at the optimum yields [`LpStatus::BoundClipped`].
    pub guard: Vec<bool>,
}

impl LpProblem {
    /// Problem with `x >= 0` and no upper bounds.
    pub fn new(objective: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            a,
            b,
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            guard: vec![false; n],
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.num_vars();
        &self.a[r * n..(r + 1) * n]
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.num_vars(), self.num_rows());
        if self.a.len() != n * m {
            return Err(Error::DimensionMismatch {
                what: "LP matrix",
                expected: n * m,
                found: self.a.len(),
            });
        }
        for (what, len) in [("lower", self.lower.len()), ("upper", self.upper.len()), ("guard", self.guard.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        if self.objective.iter().chain(&self.a).chain(&self.b).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("LP data"));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY || lo > hi {
                return Err(invalid("bounds", format!("variable {j} has bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.num_rows() {
            let ax: f64 = self.row(r).iter().zip(x).map(|(a, x)| a * x).sum();
            worst = worst.max(ax - self.b[r]);
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    fn scale(&self) -> f64 {
        1.0 + self.b.iter().fold(0.0f64, |m, b| m.max(b.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Optimal, but a guard upper bound is active.
    BoundClipped,
    /// Iteration limit or loss of accuracy.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    /// Active constraints defining the vertex: row `r` as `r`, lower bound of
    /// variable `j` as `m + j`, upper bound as `m + n + j`.
    pub basis: Vec<usize>,
    /// Row multipliers `pi >= 0` with `c + A^T pi` equal to the reduced costs.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        matches!(self.status, LpStatus::Optimal | LpStatus::BoundClipped)
    }
}

/// Starting position for nonbasic structural variables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LpStart {
    /// `true` starts the variable at its (finite) upper bound.
    pub at_upper: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic at zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

enum Step {
    Optimal,
    Unbounded,
    Progress { degenerate: bool },
}

struct Tableau {
    m: usize,
    cols: usize,
    /// Row-major `m x cols`: `B^-1 [A I (artificials)]`.
    t: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    /// Columns that may never enter (removed artificials).
    dead: Vec<bool>,
    iterations: usize,
}

impl Tableau {
    fn value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::Lower => self.lo[j],
            VarState::Upper => self.hi[j],
            VarState::Zero => 0.0,
            VarState::Basic => f64::NAN,
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.cols).map(|j| self.value(j)).collect();
        for (r, &j) in self.basis.iter().enumerate() {
            x[j] = self.xb[r];
        }
        x
    }

    fn compute_reduced_costs(&mut self) {
        self.d.clone_from(&self.cost);
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.t[r * self.cols..(r + 1) * self.cols];
                for (d, &t) in self.d.iter_mut().zip(row) {
                    *d -= cb * t;
                }
            }
        }
        for &j in &self.basis {
            self.d[j] = 0.0;
        }
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self, rule: Pricing) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols {
            if self.dead[j] || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.d[j];
            let dir = match self.state[j] {
                VarState::Basic => continue,
                VarState::Lower if d < -OPT_TOL => 1.0,
                VarState::Upper if d > OPT_TOL => -1.0,
                VarState::Zero if d.abs() > OPT_TOL => -d.signum(),
                _ => continue,
            };
            match rule {
                Pricing::Bland => return Some((j, dir)),
                Pricing::Dantzig => {
                    if best.is_none_or(|(_, _, score)| d.abs() > score) {
                        best = Some((j, dir, d.abs()));
                    }
                }
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn step(&mut self, rule: Pricing) -> Step {
        let Some((j, dir)) = self.price(rule) else {
            return Step::Optimal;
        };
        let cols = self.cols;
        // Ratio test. Entering var moves by dir * t; basic r moves by -dir * t * alpha_r.
        let mut limit = self.hi[j] - self.lo[j];
        let mut leave: Option<(usize, bool)> = None;
        for r in 0..self.m {
            let alpha = self.t[r * cols + j];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let delta = -dir * alpha;
            let bj = self.basis[r];
            let (ratio, to_upper) = if delta < 0.0 {
                if self.lo[bj] == f64::NEG_INFINITY {
                    continue;
                }
                (((self.xb[r] - self.lo[bj]).max(0.0)) / -delta, false)
            } else {
                if self.hi[bj] == f64::INFINITY {
                    continue;
                }
                (((self.hi[bj] - self.xb[r]).max(0.0)) / delta, true)
            };
            let better = match leave {
                None => ratio < limit,
                Some((lr, _)) => ratio < limit || (ratio == limit && bj < self.basis[lr]),
            };
            if better {
                limit = ratio;
                leave = Some((r, to_upper));
            }
        }
        if limit == f64::INFINITY {
            return Step::Unbounded;
        }
        self.iterations += 1;
        let t = limit;
        for r in 0..self.m {
            let alpha = self.t[r * cols + j];
            if alpha != 0.0 {
                self.xb[r] -= dir * t * alpha;
            }
        }
        let entering_value = self.value(j) + dir * t;
        match leave {
            None => {
                // Bound flip.
                self.state[j] = if dir > 0.0 { VarState::Upper } else { VarState::Lower };
            }
            Some((r, to_upper)) => {
                let out = self.basis[r];
                self.state[out] = if to_upper { VarState::Upper } else { VarState::Lower };
                self.pivot(r, j);
                self.xb[r] = entering_value;
            }
        }
        Step::Progress {
            degenerate: t <= 1e-12,
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.t[r * cols + j];
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for x in row.iter_mut() {
                *x /= p;
            }
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for other in before.chunks_exact_mut(cols).chain(after.chunks_exact_mut(cols)) {
            let f = other[j];
            if f != 0.0 {
                for (o, &pr) in other.iter_mut().zip(prow.iter()) {
                    *o -= f * pr;
                }
                other[j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (d, &pr) in self.d.iter_mut().zip(prow.iter()) {
                *d -= f * pr;
            }
        }
        self.d[j] = 0.0;
        self.state[j] = VarState::Basic;
        self.basis[r] = j;
    }

    fn run(&mut self, max_iter: usize) -> Result<bool, ()> {
        let mut degenerate_run = 0;
        loop {
            if self.iterations >= max_iter {
                return Err(());
            }
            let rule = if degenerate_run >= DEGENERATE_SWITCH {
                Pricing::Bland
            } else {
                Pricing::Dantzig
            };
            match self.step(rule) {
                Step::Optimal => return Ok(true),
                Step::Unbounded => return Ok(false),
                Step::Progress { degenerate } => {
                    degenerate_run = if degenerate { degenerate_run + 1 } else { 0 };
                }
            }
        }
    }
}

struct Simplex<'a> {
    p: &'a LpProblem,
    tab: Tableau,
    n: usize,
    m: usize,
    n_art: usize,
}

impl<'a> Simplex<'a> {
    fn new(p: &'a LpProblem, start: Option<&LpStart>) -> Self {
        let (n, m) = (p.num_vars(), p.num_rows());
        let mut state = Vec::with_capacity(n + m);
        let mut x_n = vec![0.0; n];
        for j in 0..n {
            let (lo, hi) = (p.lower[j], p.upper[j]);
            let want_upper = start.and_then(|s| s.at_upper.get(j).copied()).unwrap_or(false);
            let st = if want_upper && hi.is_finite() {
                VarState::Upper
            } else if lo.is_finite() {
                VarState::Lower
            } else if hi.is_finite() {
                VarState::Upper
            } else {
                VarState::Zero
            };
            x_n[j] = match st {
                VarState::Lower => lo,
                VarState::Upper => hi,
                _ => 0.0,
            };
            state.push(st);
        }
        let mut xb = Vec::with_capacity(m);
        let mut infeasible_rows = Vec::new();
        for r in 0..m {
            let ax: f64 = p.row(r).iter().zip(&x_n).map(|(a, x)| a * x).sum();
            let w = p.b[r] - ax;
            if w < -FEAS_TOL * p.scale() {
                infeasible_rows.push(r);
            }
            xb.push(w);
        }
        let n_art = infeasible_rows.len();
        let cols = n + m + n_art;
        let mut t = vec![0.0; m * cols];
        for r in 0..m {
            let row = &mut t[r * cols..(r + 1) * cols];
            row[..n].copy_from_slice(p.row(r));
            row[n + r] = 1.0;
        }
        let mut basis: Vec<usize> = (n..n + m).collect();
        state.extend(std::iter::repeat_n(VarState::Basic, m));
        let mut lo = p.lower.clone();
        let mut hi = p.upper.clone();
        lo.extend(std::iter::repeat_n(0.0, m + n_art));
        hi.extend(std::iter::repeat_n(f64::INFINITY, m + n_art));
        // Artificial column -e_r replaces the infeasible slack of row r.
        for (k, &r) in infeasible_rows.iter().enumerate() {
            let a = n + m + k;
            let row = &mut t[r * cols..(r + 1) * cols];
            row[a] = -1.0;
            for x in row.iter_mut() {
                *x = -*x;
            }
            xb[r] = -xb[r];
            state[n + r] = VarState::Lower;
            state.push(VarState::Basic);
            basis[r] = a;
        }
        let tab = Tableau {
            m,
            cols,
            t,
            xb,
            basis,
            state,
            lo,
            hi,
            cost: vec![0.0; cols],
            d: vec![0.0; cols],
            dead: vec![false; cols],
            iterations: 0,
        };
        Self { p, tab, n, m, n_art }
    }

    fn max_iter(&self) -> usize {
        50_000 + 200 * (self.n + self.m)
    }

    /// Returns `false` when infeasible.
    fn phase_one(&mut self) -> Result<bool, ()> {
        if self.n_art == 0 {
            return Ok(true);
        }
        let first_art = self.n + self.m;
        for a in first_art..self.tab.cols {
            self.tab.cost[a] = 1.0;
        }
        self.tab.compute_reduced_costs();
        let max_iter = self.max_iter();
        self.tab.run(max_iter)?;
        let infeas: f64 = self
            .tab
            .basis
            .iter()
            .zip(&self.tab.xb)
            .filter(|(&j, _)| j >= first_art)
            .map(|(_, &x)| x.max(0.0))
            .sum();
        if infeas > FEAS_TOL * self.p.scale() {
            return Ok(false);
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        for r in 0..self.m {
            if self.tab.basis[r] < first_art {
                continue;
            }
            let cols = self.tab.cols;
            let entering = (0..first_art)
                .filter(|&j| self.tab.state[j] != VarState::Basic)
                .max_by(|&a, &b| {
                    self.tab.t[r * cols + a]
                        .abs()
                        .total_cmp(&self.tab.t[r * cols + b].abs())
                        .then(b.cmp(&a))
                });
            if let Some(j) = entering.filter(|&j| self.tab.t[r * cols + j].abs() > PIVOT_TOL) {
                let value = self.tab.value(j);
                let out = self.tab.basis[r];
                self.tab.state[out] = VarState::Lower;
                self.tab.pivot(r, j);
                self.tab.xb[r] = value;
            }
        }
        for a in first_art..self.tab.cols {
            self.tab.cost[a] = 0.0;
            self.tab.dead[a] = true;
            self.tab.hi[a] = 0.0;
        }
        Ok(true)
    }

    /// Rebuilds `B^-1 [A I]` and basic values from the original data.
    fn refactor(&mut self) -> Result<(), ()> {
        let (n, m) = (self.n, self.m);
        let cols = self.tab.cols;
        let column = |j: usize, r: usize| -> f64 {
            if j < n {
                self.p.row(r)[j]
            } else if j < n + m {
                f64::from(u8::from(j - n == r))
            } else {
                0.0
            }
        };
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (k, &j) in self.tab.basis.iter().enumerate() {
            if j >= n + m {
                return Err(());
            }
            for r in 0..m {
                bmat[(r, k)] = column(j, r);
            }
        }
        let lu = bmat.lu();
        let mut full = DMatrix::<f64>::zeros(m, cols);
        for j in 0..n + m {
            for r in 0..m {
                full[(r, j)] = column(j, r);
            }
        }
        let solved = lu.solve(&full).ok_or(())?;
        let mut rhs = nalgebra::DVector::<f64>::from_column_slice(&self.p.b);
        for j in 0..n + m {
            if self.tab.state[j] != VarState::Basic {
                let v = self.tab.value(j);
                if v != 0.0 {
                    for r in 0..m {
                        rhs[r] -= column(j, r) * v;
                    }
                }
            }
        }
        let xb = lu.solve(&rhs).ok_or(())?;
        for r in 0..m {
            for j in 0..cols {
                self.tab.t[r * cols + j] = solved[(r, j)];
            }
            self.tab.xb[r] = xb[r];
        }
        self.tab.compute_reduced_costs();
        Ok(())
    }

    fn phase_two(&mut self) -> Result<bool, ()> {
        self.tab.cost[..self.n].copy_from_slice(&self.p.objective);
        self.tab.compute_reduced_costs();
        let max_iter = self.max_iter();
        self.tab.run(max_iter)
    }

    /// Pivots free nonbasic structurals into the basis where possible so the
    /// returned point is a vertex.
    fn settle_free(&mut self) {
        let cols = self.tab.cols;
        for j in 0..self.n {
            if self.tab.state[j] != VarState::Zero {
                continue;
            }
            let row = (0..self.m)
                .filter(|&r| {
                    let bj = self.tab.basis[r];
                    bj >= self.n && self.tab.t[r * cols + j].abs() > PIVOT_TOL
                })
                .max_by(|&a, &b| self.tab.t[a * cols + j].abs().total_cmp(&self.tab.t[b * cols + j].abs()));
            if let Some(r) = row {
                // Only a zero-ratio (degenerate) pivot keeps x unchanged.
                let bj = self.tab.basis[r];
                if (self.tab.xb[r] - self.tab.lo[bj]).abs() <= FEAS_TOL * self.p.scale() {
                    self.tab.state[bj] = VarState::Lower;
                    self.tab.pivot(r, j);
                    self.tab.xb[r] = 0.0;
                }
            }
        }
    }

    fn solution(&self, status: LpStatus) -> LpSolution {
        let x_all = self.tab.values();
        let x = x_all[..self.n].to_vec();
        let mut basis = Vec::with_capacity(self.n);
        for j in 0..self.n + self.m {
            let idx = if j < self.n { j } else { j - self.n };
            match self.tab.state[j] {
                VarState::Lower if j < self.n => basis.push(self.m + idx),
                VarState::Upper if j < self.n => basis.push(self.m + self.n + idx),
                VarState::Lower | VarState::Upper if j >= self.n => basis.push(idx),
                _ => {}
            }
        }
        basis.sort_unstable();
        let duals = (0..self.m).map(|r| self.tab.d[self.n + r].max(0.0)).collect();
        LpSolution {
            objective: self.p.objective_at(&x),
            x,
            status,
            basis,
            duals,
            iterations: self.tab.iterations,
        }
    }

    fn failure(&self, status: LpStatus) -> LpSolution {
        LpSolution {
            x: vec![f64::NAN; self.n],
            objective: f64::NAN,
            status,
            basis: Vec::new(),
            duals: vec![0.0; self.m],
            iterations: self.tab.iterations,
        }
    }
}

/// Solves an LP from the all-slack basis.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    solve_lp_with_start(p, &LpStart::default())
}

/// Solves an LP with nonbasic structural variables starting at the bounds
/// chosen in `start`.
pub fn solve_lp_with_start(p: &LpProblem, start: &LpStart) -> Result<LpSolution> {
    p.validate()?;
    let mut sx = Simplex::new(p, Some(start));
    match sx.phase_one() {
        Ok(true) => {}
        Ok(false) => return Ok(sx.failure(LpStatus::Infeasible)),
        Err(()) => return Ok(sx.failure(LpStatus::NumericalFailure)),
    }
    let tol = 1e-8 * p.scale();
    for attempt in 0..2 {
        match sx.phase_two() {
            Ok(true) => {}
            Ok(false) => return Ok(sx.failure(LpStatus::Unbounded)),
            Err(()) => return Ok(sx.failure(LpStatus::NumericalFailure)),
        }
        sx.settle_free();
        let x = sx.tab.values();
        if p.violation(&x[..sx.n]) <= tol {
            break;
        }
        if attempt == 1 || sx.refactor().is_err() {
            return Ok(sx.failure(LpStatus::NumericalFailure));
        }
        log::debug!("simplex: refactored tableau after accuracy loss");
    }
    let sol = sx.solution(LpStatus::Optimal);
    let clipped = (0..p.num_vars()).any(|j| p.guard[j] && sol.x[j] >= p.upper[j] - tol);
    Ok(LpSolution {
        status: if clipped { LpStatus::BoundClipped } else { LpStatus::Optimal },
        ..sol
    })
}

/// Number of active constraints at `x` (within `tol`) and the rank of their
/// gradients. A point is a vertex when the rank equals the variable count.
pub fn active_rank(p: &LpProblem, x: &[f64], tol: f64) -> (usize, usize) {
    let n = p.num_vars();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for r in 0..p.num_rows() {
        let ax: f64 = p.row(r).iter().zip(x).map(|(a, x)| a * x).sum();
        if (ax - p.b[r]).abs() <= tol * (1.0 + p.b[r].abs()) {
            rows.push(p.row(r).to_vec());
        }
    }
    for j in 0..n {
        let tight_lo = p.lower[j].is_finite() && (x[j] - p.lower[j]).abs() <= tol * (1.0 + p.lower[j].abs());
        let tight_hi = p.upper[j].is_finite() && (x[j] - p.upper[j]).abs() <= tol * (1.0 + p.upper[j].abs());
        if tight_lo || tight_hi {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push(e);
        }
    }
    if rows.is_empty() || n == 0 {
        return (rows.len(), 0);
    }
    let mat = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    (rows.len(), mat.rank(1e-9))
}

/// Whether `sol.x` is a vertex of the feasible polytope of `p`.
pub fn is_vertex(p: &LpProblem, x: &[f64]) -> bool {
    active_rank(p, x, 1e-8).1 == p.num_vars()
}
