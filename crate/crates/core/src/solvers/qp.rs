//! Convex QP through Lemke's complementary pivoting on the KKT system.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::simplex::{solve_lp, LpProblem, LpStatus};

/// `min 1/2 x^T H x + g^T x  s.t.  A x <= b,  x_j >= 0 for nonneg[j]`.
/// `H` must be symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    /// Row-major `n x n`.
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    /// Row-major `m x n`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub nonneg: Vec<bool>,
}

impl QpProblem {
    pub fn num_vars(&self) -> usize {
        self.g.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = (self.num_vars(), self.num_rows());
        for (what, expected, found) in [
            ("QP Hessian", n * n, self.h.len()),
            ("QP matrix", m * n, self.a.len()),
            ("QP sign flags", n, self.nonneg.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch { what, expected, found });
            }
        }
        if self.h.iter().chain(&self.g).chain(&self.a).chain(&self.b).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("QP data"));
        }
        for i in 0..n {
            for j in 0..i {
                let (x, y) = (self.h[i * n + j], self.h[j * n + i]);
                if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                    return Err(invalid("h", "Hessian is not symmetric"));
                }
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let n = self.num_vars();
        let mut f = 0.0;
        for i in 0..n {
            let hx: f64 = (0..n).map(|j| self.h[i * n + j] * x[j]).sum();
            f += 0.5 * x[i] * hx + self.g[i] * x[i];
        }
        f
    }

    /// Max-norm of the KKT violation at `(x, lambda)`: primal and dual
    /// feasibility, stationarity and complementarity.
    pub fn kkt_residual(&self, x: &[f64], lambda: &[f64]) -> f64 {
        let (n, m) = (self.num_vars(), self.num_rows());
        let mut worst = 0.0f64;
        for i in 0..m {
            let row = &self.a[i * n..(i + 1) * n];
            let slack = self.b[i] - row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
            worst = worst.max(-slack).max(-lambda[i]).max((lambda[i] * slack).abs());
        }
        for j in 0..n {
            let mut grad = self.g[j];
            for k in 0..n {
                grad += self.h[j * n + k] * x[k];
            }
            for i in 0..m {
                grad += self.a[i * n + j] * lambda[i];
            }
            if self.nonneg[j] {
                worst = worst.max(-x[j]).max(-grad).max((x[j] * grad).abs());
            } else {
                worst = worst.max(grad.abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the rows of `A`.
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Solves `w = M z + q, w, z >= 0, w^T z = 0` by Lemke's method with a unit
/// covering vector. Returns `None` on ray termination or iteration limit.
fn lemke(mm: &[f64], q: &[f64]) -> Option<(Vec<f64>, usize)> {
    let k = q.len();
    if q.iter().all(|&x| x >= 0.0) {
        return Some((vec![0.0; k], 0));
    }
    // Columns: w (0..k), z (k..2k), z0 (2k). Equation: I w - M z - e z0 = q.
    let cols = 2 * k + 1;
    let mut t = vec![0.0; k * cols];
    let mut rhs = q.to_vec();
    for i in 0..k {
        let row = &mut t[i * cols..(i + 1) * cols];
        row[i] = 1.0;
        for j in 0..k {
            row[k + j] = -mm[i * k + j];
        }
        row[2 * k] = -1.0;
    }
    let mut basis: Vec<usize> = (0..k).collect();
    let z0 = 2 * k;

    let pivot = |t: &mut [f64], rhs: &mut [f64], r: usize, c: usize| {
        let p = t[r * cols + c];
        for x in &mut t[r * cols..(r + 1) * cols] {
            *x /= p;
        }
        rhs[r] /= p;
        let prow: Vec<f64> = t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..k {
            if i == r {
                continue;
            }
            let f = t[i * cols + c];
            if f != 0.0 {
                for (x, &pr) in t[i * cols..(i + 1) * cols].iter_mut().zip(&prow) {
                    *x -= f * pr;
                }
                rhs[i] -= f * rhs[r];
            }
        }
    };

    // z0 enters, the most negative q leaves.
    let r0 = (0..k).min_by(|&a, &b| q[a].total_cmp(&q[b]).then(a.cmp(&b)))?;
    pivot(&mut t, &mut rhs, r0, z0);
    let mut left = basis[r0];
    basis[r0] = z0;
    let max_iter = 50 * (k + 1) * (k + 1) + 1000;
    for iter in 1..=max_iter {
        let entering = if left < k { left + k } else { left - k };
        let col: Vec<f64> = (0..k).map(|i| t[i * cols + entering]).collect();
        let cand: Vec<usize> = (0..k).filter(|&i| col[i] > 1e-12).collect();
        if cand.is_empty() {
            return None;
        }
        let ratio = |i: usize| rhs[i].max(0.0) / col[i];
        let best = cand.iter().map(|&i| ratio(i)).fold(f64::INFINITY, f64::min);
        let mut ties: Vec<usize> = cand
            .into_iter()
            .filter(|&i| ratio(i) <= best + 1e-12 * (1.0 + best))
            .collect();
        let r = if let Some(&r) = ties.iter().find(|&&i| basis[i] == z0) {
            r
        } else {
            // Lexicographic refinement over the columns holding B^-1.
            let mut c = 0;
            while ties.len() > 1 && c < k {
                let m = ties.iter().map(|&i| t[i * cols + c] / col[i]).fold(f64::INFINITY, f64::min);
                ties.retain(|&i| t[i * cols + c] / col[i] <= m + 1e-14);
                c += 1;
            }
            ties[0]
        };
        pivot(&mut t, &mut rhs, r, entering);
        left = basis[r];
        basis[r] = entering;
        if left == z0 {
            let mut z = vec![0.0; k];
            for (i, &bv) in basis.iter().enumerate() {
                if (k..2 * k).contains(&bv) {
                    z[bv - k] = rhs[i].max(0.0);
                }
            }
            return Some((z, iter));
        }
    }
    None
}

/// Solves a convex QP exactly (up to rounding) by complementary pivoting.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    p.validate()?;
    let (n, m) = (p.num_vars(), p.num_rows());
    // Split free variables: x_j = x_j^+ - x_j^-.
    let mut map: Vec<(usize, f64)> = (0..n).map(|j| (j, 1.0)).collect();
    for j in 0..n {
        if !p.nonneg[j] {
            map.push((j, -1.0));
        }
    }
    let np = map.len();
    let k = np + m;
    let mut mm = vec![0.0; k * k];
    let mut q = vec![0.0; k];
    for (a, &(ja, sa)) in map.iter().enumerate() {
        for (b, &(jb, sb)) in map.iter().enumerate() {
            mm[a * k + b] = sa * sb * p.h[ja * n + jb];
        }
        for i in 0..m {
            let aij = sa * p.a[i * n + ja];
            mm[a * k + np + i] = aij;
            mm[(np + i) * k + a] = -aij;
        }
        q[a] = sa * p.g[ja];
    }
    q[np..].copy_from_slice(&p.b);

    let Some((z, iterations)) = lemke(&mm, &q) else {
        let feas = LpProblem::new(vec![0.0; n], p.a.clone(), p.b.clone()).with_bounds(
            p.nonneg.iter().map(|&nn| if nn { 0.0 } else { f64::NEG_INFINITY }).collect(),
            vec![f64::INFINITY; n],
        );
        let status = match solve_lp(&feas)?.status {
            LpStatus::Infeasible => QpStatus::Infeasible,
            LpStatus::NumericalFailure => QpStatus::NumericalFailure,
            _ => QpStatus::Unbounded,
        };
        return Ok(QpSolution {
            x: vec![f64::NAN; n],
            lambda: vec![f64::NAN; m],
            objective: f64::NAN,
            status,
            kkt_residual: f64::INFINITY,
            iterations: 0,
        });
    };
    let mut x = vec![0.0; n];
    for (a, &(j, s)) in map.iter().enumerate() {
        x[j] += s * z[a];
    }
    let lambda = z[np..].to_vec();
    Ok(QpSolution {
        objective: p.objective_at(&x),
        kkt_residual: p.kkt_residual(&x, &lambda),
        x,
        lambda,
        status: QpStatus::Optimal,
        iterations,
    })
}

/// Closed-form minimizer of `(c^T v - k)^2 + ||v - w||^2`.
pub fn solve_rank_one_qp(c: &[f64], k: f64, w: &[f64]) -> Result<Vec<f64>> {
    if c.len() != w.len() {
        return Err(Error::DimensionMismatch {
            what: "rank-one QP",
            expected: c.len(),
            found: w.len(),
        });
    }
    if !k.is_finite() || c.iter().chain(w).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("rank-one QP"));
    }
    let cc: f64 = c.iter().map(|x| x * x).sum();
    let cw: f64 = c.iter().zip(w).map(|(a, b)| a * b).sum();
    let step = (k - cw) / (1.0 + cc);
    Ok(w.iter().zip(c).map(|(w, c)| w + step * c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_halfspace() {
        // min (x-2)^2 + (y-2)^2 s.t. x + y <= 2
        let p = QpProblem {
            h: vec![2.0, 0.0, 0.0, 2.0],
            g: vec![-4.0, -4.0],
            a: vec![1.0, 1.0],
            b: vec![2.0],
            nonneg: vec![false, false],
        };
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.lambda[0] - 2.0).abs() < 1e-12);
        assert!(s.kkt_residual < 1e-10);
    }

    #[test]
    fn unconstrained_minimum_inside() {
        let p = QpProblem {
            h: vec![1.0],
            g: vec![-0.5],
            a: vec![],
            b: vec![],
            nonneg: vec![true],
        };
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let inf = QpProblem {
            h: vec![1.0],
            g: vec![0.0],
            a: vec![1.0],
            b: vec![-1.0],
            nonneg: vec![true],
        };
        assert_eq!(solve_qp(&inf).unwrap().status, QpStatus::Infeasible);
        let unb = QpProblem {
            h: vec![0.0],
            g: vec![-1.0],
            a: vec![],
            b: vec![],
            nonneg: vec![true],
        };
        assert_eq!(solve_qp(&unb).unwrap().status, QpStatus::Unbounded);
    }

    #[test]
    fn rank_one_closed_form() {
        let v = solve_rank_one_qp(&[1.0, 0.0, 0.0], 1.0, &[0.0; 3]).unwrap();
        assert_eq!(v, vec![0.5, 0.0, 0.0]);
        let w = [0.3, -2.0];
        assert_eq!(solve_rank_one_qp(&[0.0, 0.0], 7.0, &w).unwrap(), w.to_vec());
    }
}
