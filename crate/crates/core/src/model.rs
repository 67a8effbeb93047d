//! Domain types and the functionals shared by both refiners: consensus
//! evaluation, lifting between model space and the nonnegative lifted space,
//! the complementarity residual and the penalty value.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{dot, max_abs, Real};

/// Relative width of the band around a constraint boundary inside which a
/// residual still counts as satisfied.
pub const TIE_BAND: f64 = 1e-9;

/// Model coefficients `theta`, length `d >= 1`, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams<T: Real = f64> {
    theta: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn new(theta: Vec<T>) -> Result<Self> {
        if theta.is_empty() {
            return Err(invalid("theta", "model dimension must be at least 1"));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        Ok(Self { theta })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            theta: vec![T::zero(); d.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.theta
    }

    pub fn into_vec(self) -> Vec<T> {
        self.theta
    }
}

/// Measurements `{(x_j, y_j)}` for a linear model `y = x^T theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset<T: Real = f64> {
    dim: usize,
    xs: Vec<T>,
    ys: Vec<T>,
}

impl<T: Real> RegressionDataset<T> {
    /// Builds a dataset from row-major regressors (`n x dim`) and targets.
    pub fn from_rows(dim: usize, xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "regressor dimension must be at least 1"));
        }
        if ys.is_empty() {
            return Err(Error::TooFewData {
                needed: 1,
                found: 0,
            });
        }
        if xs.len() != dim * ys.len() {
            return Err(Error::DimensionMismatch {
                what: "regressor matrix",
                expected: dim * ys.len(),
                found: xs.len(),
            });
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression dataset"));
        }
        Ok(Self { dim, xs, ys })
    }

    pub fn from_points(points: &[(Vec<T>, T)]) -> Result<Self> {
        let dim = points.first().map(|p| p.0.len()).unwrap_or(0);
        let mut xs = Vec::with_capacity(dim * points.len());
        let mut ys = Vec::with_capacity(points.len());
        for (j, (x, y)) in points.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: if j == 0 { "regressor" } else { "regressor row" },
                    expected: dim,
                    found: x.len(),
                });
            }
            xs.extend_from_slice(x);
            ys.push(*y);
        }
        Self::from_rows(dim, xs, ys)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self, j: usize) -> &[T] {
        &self.xs[j * self.dim..(j + 1) * self.dim]
    }

    pub fn y(&self, j: usize) -> T {
        self.ys[j]
    }

    pub fn ys(&self) -> &[T] {
        &self.ys
    }

    pub fn xs(&self) -> &[T] {
        &self.xs
    }

    /// Signed residual `x_j^T theta - y_j`.
    pub fn residual(&self, j: usize, theta: &[T]) -> T {
        dot(self.x(j), theta) - self.ys[j]
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut xs = Vec::with_capacity(rows.len() * self.dim);
        let mut ys = Vec::with_capacity(rows.len());
        for &j in rows {
            xs.extend_from_slice(self.x(j));
            ys.push(self.ys[j]);
        }
        Self {
            dim: self.dim,
            xs,
            ys,
        }
    }
}

/// Lifted linear constraint system `c_i^T v <= b_i` over the nonnegative
/// lifted parameters `v` (length `d + 1`), with rows grouped per datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet<T: Real = f64> {
    dim_lifted: usize,
    c: Vec<T>,
    b: Vec<T>,
    groups: Vec<Vec<usize>>,
    row_group: Vec<usize>,
}

impl<T: Real> ConstraintSet<T> {
    /// Validates and assembles a constraint set. `groups[j]` lists the rows
    /// belonging to datum `j`; groups must partition `0..M`.
    pub fn new(dim_lifted: usize, c: Vec<T>, b: Vec<T>, groups: Vec<Vec<usize>>) -> Result<Self> {
        if dim_lifted < 2 {
            return Err(invalid("dim_lifted", "lifted dimension must be at least 2"));
        }
        let m = b.len();
        if c.len() != m * dim_lifted {
            return Err(Error::DimensionMismatch {
                what: "constraint matrix",
                expected: m * dim_lifted,
                found: c.len(),
            });
        }
        if c.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("constraint set"));
        }
        let mut row_group = vec![usize::MAX; m];
        for (j, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                return Err(invalid("groups", format!("datum {j} has no rows")));
            }
            for &i in rows {
                if i >= m {
                    return Err(invalid("groups", format!("row {i} out of range")));
                }
                if row_group[i] != usize::MAX {
                    return Err(invalid("groups", format!("row {i} belongs to two data")));
                }
                row_group[i] = j;
            }
        }
        if let Some(i) = row_group.iter().position(|&g| g == usize::MAX) {
            return Err(invalid("groups", format!("row {i} belongs to no datum")));
        }
        Ok(Self {
            dim_lifted,
            c,
            b,
            groups,
            row_group,
        })
    }

    /// Number of constraint rows `M`.
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Number of data `N` (groups).
    pub fn num_data(&self) -> usize {
        self.groups.len()
    }

    pub fn dim_lifted(&self) -> usize {
        self.dim_lifted
    }

    /// Model dimension `d = dim_lifted - 1`.
    pub fn model_dim(&self) -> usize {
        self.dim_lifted - 1
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.c[i * self.dim_lifted..(i + 1) * self.dim_lifted]
    }

    pub fn rhs(&self, i: usize) -> T {
        self.b[i]
    }

    pub fn rhs_all(&self) -> &[T] {
        &self.b
    }

    pub fn matrix(&self) -> &[T] {
        &self.c
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of_row(&self, i: usize) -> usize {
        self.row_group[i]
    }

    /// `c_i^T v - b_i`.
    pub fn row_residual(&self, i: usize, v: &[T]) -> T {
        dot(self.row(i), v) - self.b[i]
    }

    /// `C v - b` for all rows.
    pub fn residuals(&self, v: &[T]) -> Vec<T> {
        (0..self.num_rows()).map(|i| self.row_residual(i, v)).collect()
    }

    /// Tie band applied to row `i`.
    pub fn band(&self, i: usize) -> T {
        T::lit(TIE_BAND) * (T::one() + self.b[i].abs())
    }

    pub fn rhs_norm_inf(&self) -> T {
        max_abs(&self.b)
    }

    pub fn matrix_norm_inf(&self) -> T {
        max_abs(&self.c)
    }

    /// Smallest nonzero absolute entry of `C` (or one when `C` is zero).
    pub fn min_nonzero_abs(&self) -> T {
        self.c
            .iter()
            .map(|x| x.abs())
            .filter(|x| *x > T::zero())
            .fold(None, |m: Option<T>, x| Some(m.map_or(x, |m| m.min(x))))
            .unwrap_or(T::one())
    }

    /// Constraint set restricted to a subset of data, keeping group order.
    pub fn select_data(&self, data: &[usize]) -> Self {
        let mut c = Vec::new();
        let mut b = Vec::new();
        let mut groups = Vec::with_capacity(data.len());
        for &j in data {
            let mut rows = Vec::with_capacity(self.groups[j].len());
            for &i in &self.groups[j] {
                rows.push(b.len());
                c.extend_from_slice(self.row(i));
                b.push(self.b[i]);
            }
            groups.push(rows);
        }
        let row_group = groups
            .iter()
            .enumerate()
            .flat_map(|(j, rows)| rows.iter().map(move |_| j))
            .collect();
        Self {
            dim_lifted: self.dim_lifted,
            c,
            b,
            groups,
            row_group,
        }
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Real>(&self) -> ConstraintSet<U> {
        let conv = |x: &T| U::lit(x.to_f64_lossy());
        ConstraintSet {
            dim_lifted: self.dim_lifted,
            c: self.c.iter().map(conv).collect(),
            b: self.b.iter().map(conv).collect(),
            groups: self.groups.clone(),
            row_group: self.row_group.clone(),
        }
    }
}

/// Incremental builder appending one datum (group of unlifted rows) at a time.
#[derive(Debug, Clone)]
pub struct ConstraintSetBuilder<T: Real = f64> {
    dim: usize,
    c: Vec<T>,
    b: Vec<T>,
    groups: Vec<Vec<usize>>,
}

impl<T: Real> ConstraintSetBuilder<T> {
    /// Builder for a model of dimension `dim` (lifted dimension `dim + 1`).
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            c: Vec::new(),
            b: Vec::new(),
            groups: Vec::new(),
        }
    }

    /// Appends a datum whose rows are `a^T theta <= rhs` in model space; each
    /// row is lifted to `c = [a; -sum(a)]`.
    pub fn push_datum<'a>(&mut self, rows: impl IntoIterator<Item = (&'a [T], T)>) -> Result<()> {
        let mut idx = Vec::new();
        for (a, rhs) in rows {
            if a.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    what: "constraint row",
                    expected: self.dim,
                    found: a.len(),
                });
            }
            idx.push(self.b.len());
            self.c.extend_from_slice(&lift_row(a));
            self.b.push(rhs);
        }
        self.groups.push(idx);
        Ok(())
    }

    pub fn build(self) -> Result<ConstraintSet<T>> {
        if self.groups.is_empty() {
            return Err(Error::TooFewData {
                needed: 1,
                found: 0,
            });
        }
        ConstraintSet::new(self.dim + 1, self.c, self.b, self.groups)
    }
}

/// Lifts a model-space row `a` to `c = [a; -1^T a]`.
pub fn lift_row<T: Real>(a: &[T]) -> Vec<T> {
    let total: T = a.iter().copied().sum();
    let mut c = Vec::with_capacity(a.len() + 1);
    c.extend_from_slice(a);
    c.push(-total);
    c
}

/// Concatenated block `z = (u, s, v)`: outlier indicators, slacks and lifted
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveState<T: Real = f64> {
    pub u: Vec<T>,
    pub s: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> SolveState<T> {
    pub fn check_dims(&self, cs: &ConstraintSet<T>) -> Result<()> {
        let m = cs.num_rows();
        for (what, len, expected) in [
            ("u", self.u.len(), m),
            ("s", self.s.len(), m),
            ("v", self.v.len(), cs.dim_lifted()),
        ] {
            if len != expected {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found: len,
                });
            }
        }
        Ok(())
    }

    /// Largest violation of the polytope `P` (`s >= Cv - b`, `0 <= u <= 1`,
    /// `s, v >= 0`); zero when `z` lies in `P`.
    pub fn polytope_violation(&self, cs: &ConstraintSet<T>) -> T {
        let mut worst = T::zero();
        for i in 0..cs.num_rows() {
            worst = worst
                .max(cs.row_residual(i, &self.v) - self.s[i])
                .max(-self.s[i])
                .max(-self.u[i])
                .max(self.u[i] - T::one());
        }
        self.v.iter().fold(worst, |w, &x| w.max(-x))
    }

    /// Euclidean distance between two states of equal shape.
    pub fn distance(&self, other: &Self) -> T {
        let sq = |a: &[T], b: &[T]| {
            a.iter()
                .zip(b)
                .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        };
        (sq(&self.u, &other.u) + sq(&self.s, &other.s) + sq(&self.v, &other.v)).sqrt()
    }

    /// Model parameters encoded by the lifted block.
    pub fn theta(&self) -> Result<ModelParams<T>> {
        recover_theta(&self.v)
    }
}

/// One entry of a solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Objective value (penalty value for EP, augmented Lagrangian for AM).
    pub objective: f64,
    /// Penalty / residual value (complementarity residual for EP, largest
    /// coupling residual for AM).
    pub residual: f64,
}

/// Outcome of any fitting method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: ModelParams<f64>,
    pub inlier_mask: Vec<bool>,
    pub consensus: usize,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub wall_time: f64,
    pub converged: bool,
    /// Set when a guard (e.g. the LP upper bound on `v`) was active.
    pub tainted: bool,
}

impl FitResult {
    /// Assembles a result with consensus recomputed from `theta`.
    pub fn evaluate(theta: ModelParams<f64>, cs: &ConstraintSet<f64>) -> Result<Self> {
        let Consensus { count, mask } = consensus(&theta, cs, 0.0)?;
        Ok(Self {
            theta,
            inlier_mask: mask,
            consensus: count,
            iterations: 0,
            trace: Vec::new(),
            wall_time: 0.0,
            converged: true,
            tainted: false,
        })
    }
}

/// Datum-level consensus of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consensus {
    pub count: usize,
    pub mask: Vec<bool>,
}

/// Counts data whose rows all satisfy `c_i^T v(theta) - b_i <= tol` (plus
/// the tie band).
pub fn consensus<T: Real>(theta: &ModelParams<T>, cs: &ConstraintSet<T>, tol: T) -> Result<Consensus> {
    if theta.dim() + 1 != cs.dim_lifted() {
        return Err(Error::DimensionMismatch {
            what: "theta",
            expected: cs.model_dim(),
            found: theta.dim(),
        });
    }
    if tol < T::zero() || !tol.is_finite() {
        return Err(invalid("tol", "tolerance must be finite and nonnegative"));
    }
    let v = lift_theta(theta);
    let mask: Vec<bool> = cs
        .groups()
        .iter()
        .map(|rows| {
            rows.iter()
                .all(|&i| cs.row_residual(i, &v) <= tol + cs.band(i))
        })
        .collect();
    Ok(Consensus {
        count: mask.iter().filter(|&&m| m).count(),
        mask,
    })
}

/// `v = [theta + gamma 1; gamma]` with `gamma = |min_j theta_j|`.
pub fn lift_theta<T: Real>(theta: &ModelParams<T>) -> Vec<T> {
    let t = theta.as_slice();
    let gamma = t.iter().copied().fold(T::infinity(), T::min).abs();
    let mut v: Vec<T> = t.iter().map(|&x| x + gamma).collect();
    v.push(gamma);
    v
}

/// `theta_k = v_k - v_{d+1}`.
pub fn recover_theta<T: Real>(v: &[T]) -> Result<ModelParams<T>> {
    if v.len() < 2 {
        return Err(Error::DimensionMismatch {
            what: "lifted vector",
            expected: 2,
            found: v.len(),
        });
    }
    let (head, last) = v.split_at(v.len() - 1);
    ModelParams::new(head.iter().map(|&x| x - last[0]).collect())
}

/// Initial state from a model: `u = I(Cv - b > 0)`, `s = u * (Cv - b)`.
pub fn init_state<T: Real>(theta: &ModelParams<T>, cs: &ConstraintSet<T>) -> Result<SolveState<T>> {
    if theta.dim() + 1 != cs.dim_lifted() {
        return Err(Error::DimensionMismatch {
            what: "theta",
            expected: cs.model_dim(),
            found: theta.dim(),
        });
    }
    let v = lift_theta(theta);
    let (u, s) = cs
        .residuals(&v)
        .into_iter()
        .map(|r| {
            if r > T::zero() {
                (T::one(), r)
            } else {
                (T::zero(), T::zero())
            }
        })
        .unzip();
    Ok(SolveState { u, s, v })
}

/// Per-row complementarity residuals `r_i = s_i - u_i (c_i^T v - b_i)`.
pub fn complementarity_terms<T: Real>(z: &SolveState<T>, cs: &ConstraintSet<T>) -> Vec<T> {
    (0..cs.num_rows())
        .map(|i| z.s[i] - z.u[i] * cs.row_residual(i, &z.v))
        .collect()
}

/// `Q(z) = sum_i s_i - u_i (c_i^T v - b_i)`.
pub fn complementarity_residual<T: Real>(z: &SolveState<T>, cs: &ConstraintSet<T>) -> T {
    complementarity_terms(z, cs).into_iter().sum()
}

/// Largest violation of the complementarity-constrained problem: the
/// polytope constraints plus `u_i (s_i - c_i^T v + b_i) = 0` and
/// `s_i (1 - u_i) = 0`.
pub fn feasibility_violation<T: Real>(z: &SolveState<T>, cs: &ConstraintSet<T>) -> T {
    let mut worst = z.polytope_violation(cs);
    for i in 0..cs.num_rows() {
        let r = cs.row_residual(i, &z.v);
        worst = worst
            .max((z.u[i] * (z.s[i] - r)).abs())
            .max((z.s[i] * (T::one() - z.u[i])).abs());
    }
    worst
}

/// `P(z | alpha) = ||u||_1 + alpha Q(z)`.
pub fn penalty_value<T: Real>(z: &SolveState<T>, cs: &ConstraintSet<T>, alpha: T) -> T {
    let f: T = z.u.iter().map(|u| u.abs()).sum();
    f + alpha * complementarity_residual(z, cs)
}
