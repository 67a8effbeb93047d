//! Euclidean projection onto `{(s, v) : C v - s <= b, s >= 0, v >= 0}`.
//!
//! A primal active-set method specialised to the structure of the set: every
//! equality-constrained subproblem reduces to a dense system in `v` alone, so
//! the cost per iteration is linear in the number of rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ConstraintSet;

use super::qp::QpProblem;

/// Constraints held at equality: `C v - s = b` rows, `s = 0` rows and
/// `v = 0` coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorkingSet {
    pub row: Vec<bool>,
    pub slack: Vec<bool>,
    pub coord: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSolution {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub working: WorkingSet,
    pub iterations: usize,
}

/// Feasible starting point, optionally with the working set it was found with.
#[derive(Debug, Clone, Copy)]
pub struct CouplingStart<'a> {
    pub s: &'a [f64],
    pub v: &'a [f64],
    pub working: Option<&'a WorkingSet>,
}

struct Eqp {
    s: Vec<f64>,
    v: Vec<f64>,
    /// Multipliers of `C v - s <= b`, `-s <= 0`, `-v <= 0` for working members.
    lam_row: Vec<f64>,
    lam_slack: Vec<f64>,
    lam_coord: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_eqp(cs: &ConstraintSet<f64>, a: &[f64], w: &[f64], ws: &WorkingSet) -> Result<Eqp> {
    let (m, n) = (cs.num_rows(), cs.dim_lifted());
    let free: Vec<usize> = (0..n).filter(|&k| !ws.coord[k]).collect();
    let both: Vec<usize> = (0..m).filter(|&i| ws.row[i] && ws.slack[i]).collect();
    let nf = free.len();
    let dim = nf + both.len();
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (p, &k) in free.iter().enumerate() {
        kkt[(p, p)] = 1.0;
        rhs[p] = w[k];
    }
    for i in 0..m {
        if ws.row[i] && !ws.slack[i] {
            let c = cs.row(i);
            let t = cs.rhs(i) + a[i];
            for (p, &kp) in free.iter().enumerate() {
                rhs[p] += t * c[kp];
                for (q, &kq) in free.iter().enumerate() {
                    kkt[(p, q)] += c[kp] * c[kq];
                }
            }
        }
    }
    for (e, &i) in both.iter().enumerate() {
        let c = cs.row(i);
        for (p, &kp) in free.iter().enumerate() {
            kkt[(nf + e, p)] = c[kp];
            kkt[(p, nf + e)] = c[kp];
        }
        rhs[nf + e] = cs.rhs(i);
    }
    let sol = if dim == 0 {
        DVector::zeros(0)
    } else {
        kkt.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("coupling projection: singular working set".into()))?
    };
    let mut v = vec![0.0; n];
    for (p, &k) in free.iter().enumerate() {
        v[k] = sol[p];
    }
    let mut s = vec![0.0; m];
    let mut lam_row = vec![0.0; m];
    let mut lam_slack = vec![0.0; m];
    // 2 (v - w) + sum lam_row c - lam_coord = 0
    let mut grad_v: Vec<f64> = v.iter().zip(w).map(|(v, w)| 2.0 * (v - w)).collect();
    for i in 0..m {
        match (ws.row[i], ws.slack[i]) {
            (false, false) => s[i] = a[i],
            (false, true) => lam_slack[i] = -2.0 * a[i],
            (true, false) => {
                s[i] = cs.row_residual(i, &v);
                lam_row[i] = 2.0 * (s[i] - a[i]);
            }
            (true, true) => {}
        }
    }
    for (e, &i) in both.iter().enumerate() {
        lam_row[i] = 2.0 * sol[nf + e];
        lam_slack[i] = -2.0 * a[i] - lam_row[i];
    }
    for i in 0..m {
        if lam_row[i] != 0.0 {
            for (g, c) in grad_v.iter_mut().zip(cs.row(i)) {
                *g += lam_row[i] * c;
            }
        }
    }
    let lam_coord = (0..n).map(|k| if ws.coord[k] { grad_v[k] } else { 0.0 }).collect();
    Ok(Eqp {
        s,
        v,
        lam_row,
        lam_slack,
        lam_coord,
    })
}

fn infer_working_set(cs: &ConstraintSet<f64>, s: &[f64], v: &[f64], tol: f64) -> WorkingSet {
    let m = cs.num_rows();
    let mut ws = WorkingSet {
        row: vec![false; m],
        slack: vec![false; m],
        coord: v.iter().map(|&x| x == 0.0).collect(),
    };
    for i in 0..m {
        if s[i] == 0.0 {
            ws.slack[i] = true;
        } else if (cs.row_residual(i, v) - s[i]).abs() <= tol {
            ws.row[i] = true;
        }
    }
    ws
}

fn violation(cs: &ConstraintSet<f64>, s: &[f64], v: &[f64]) -> f64 {
    let mut worst = v.iter().fold(0.0f64, |m, &x| m.max(-x));
    for (i, &si) in s.iter().enumerate() {
        worst = worst.max(-si).max(cs.row_residual(i, v) - si);
    }
    worst
}

/// Projects `(target_s, target_v)` onto the coupling set.
pub fn project_coupling(
    cs: &ConstraintSet<f64>,
    target_s: &[f64],
    target_v: &[f64],
    start: Option<CouplingStart<'_>>,
) -> Result<CouplingSolution> {
    let (m, n) = (cs.num_rows(), cs.dim_lifted());
    for (what, expected, found) in [("coupling target s", m, target_s.len()), ("coupling target v", n, target_v.len())] {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
    }
    if target_s.iter().chain(target_v).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("coupling target"));
    }
    let scale = 1.0
        + target_s
            .iter()
            .chain(target_v)
            .chain(cs.rhs_all())
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
    let feas_tol = 1e-12 * scale;
    let step_tol = 1e-13 * scale;
    let mult_tol = 1e-11 * scale;

    let warm = start.filter(|st| {
        st.s.len() == m && st.v.len() == n && violation(cs, st.s, st.v) <= feas_tol
    });
    let (mut s, mut v, mut ws) = match warm {
        Some(st) => {
            let ws = match st.working {
                Some(w) if w.row.len() == m && w.slack.len() == m && w.coord.len() == n => w.clone(),
                _ => infer_working_set(cs, st.s, st.v, feas_tol),
            };
            (st.s.to_vec(), st.v.to_vec(), ws)
        }
        None => {
            let v: Vec<f64> = target_v.iter().map(|x| x.max(0.0)).collect();
            let s: Vec<f64> = (0..m)
                .map(|i| target_s[i].max(0.0).max(cs.row_residual(i, &v)))
                .collect();
            let ws = infer_working_set(cs, &s, &v, 0.0);
            (s, v, ws)
        }
    };
    // A supplied working set must be active at the start point.
    for i in 0..m {
        if ws.slack[i] && s[i].abs() > feas_tol {
            ws.slack[i] = false;
        }
        if ws.row[i] && (cs.row_residual(i, &v) - s[i]).abs() > feas_tol {
            ws.row[i] = false;
        }
    }
    for k in 0..n {
        if ws.coord[k] && v[k].abs() > feas_tol {
            ws.coord[k] = false;
        }
    }

    let max_iter = 20 * (m + n) + 100;
    for iteration in 1..=max_iter {
        let eqp = solve_eqp(cs, target_s, target_v, &ws)?;
        let ps: Vec<f64> = eqp.s.iter().zip(&s).map(|(a, b)| a - b).collect();
        let pv: Vec<f64> = eqp.v.iter().zip(&v).map(|(a, b)| a - b).collect();
        let pnorm = ps.iter().chain(&pv).fold(0.0f64, |acc, x| acc.max(x.abs()));
        if pnorm <= step_tol {
            s = eqp.s;
            v = eqp.v;
            // Drop the most negative multiplier, or stop.
            let mut worst: Option<(f64, usize, usize)> = None;
            let mut consider = |val: f64, kind: usize, idx: usize| {
                if val < -mult_tol && worst.is_none_or(|(w, _, _)| val < w) {
                    worst = Some((val, kind, idx));
                }
            };
            for i in 0..m {
                if ws.row[i] {
                    consider(eqp.lam_row[i], 0, i);
                }
                if ws.slack[i] {
                    consider(eqp.lam_slack[i], 1, i);
                }
            }
            for k in 0..n {
                if ws.coord[k] {
                    consider(eqp.lam_coord[k], 2, k);
                }
            }
            match worst {
                None => {
                    for k in 0..n {
                        if ws.coord[k] {
                            v[k] = 0.0;
                        }
                    }
                    return Ok(CouplingSolution {
                        s,
                        v,
                        working: ws,
                        iterations: iteration,
                    });
                }
                Some((_, 0, i)) => ws.row[i] = false,
                Some((_, 1, i)) => ws.slack[i] = false,
                Some((_, _, k)) => ws.coord[k] = false,
            }
            continue;
        }
        // Ratio test over constraints outside the working set.
        let mut alpha = 1.0;
        let mut block: Option<(usize, usize)> = None;
        let dir_tol = 1e-12 * pnorm;
        for i in 0..m {
            if !ws.row[i] {
                let c = cs.row(i);
                let dir = dot(c, &pv) - ps[i];
                if dir > dir_tol * (1.0 + c.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))) {
                    let gap = (s[i] - cs.row_residual(i, &v)).max(0.0);
                    let t = gap / dir;
                    if t < alpha {
                        alpha = t;
                        block = Some((0, i));
                    }
                }
            }
            if !ws.slack[i] && -ps[i] > dir_tol {
                let t = s[i].max(0.0) / -ps[i];
                if t < alpha {
                    alpha = t;
                    block = Some((1, i));
                }
            }
        }
        for k in 0..n {
            if !ws.coord[k] && -pv[k] > dir_tol {
                let t = v[k].max(0.0) / -pv[k];
                if t < alpha {
                    alpha = t;
                    block = Some((2, k));
                }
            }
        }
        for (x, p) in s.iter_mut().zip(&ps) {
            *x += alpha * p;
        }
        for (x, p) in v.iter_mut().zip(&pv) {
            *x += alpha * p;
        }
        match block {
            None => {}
            Some((0, i)) => ws.row[i] = true,
            Some((1, i)) => {
                s[i] = 0.0;
                ws.slack[i] = true;
            }
            Some((_, k)) => {
                v[k] = 0.0;
                ws.coord[k] = true;
            }
        }
    }
    Err(Error::Solver(format!(
        "coupling projection did not terminate in {max_iter} iterations"
    )))
}

/// The same projection as an explicit QP in `(s, v)` with objective
/// `1/2 ||s - a||^2 + 1/2 ||v - w||^2` up to a constant.
pub fn coupling_qp(cs: &ConstraintSet<f64>, target_s: &[f64], target_v: &[f64]) -> QpProblem {
    let (m, n) = (cs.num_rows(), cs.dim_lifted());
    let nv = m + n;
    let mut h = vec![0.0; nv * nv];
    for j in 0..nv {
        h[j * nv + j] = 1.0;
    }
    let g: Vec<f64> = target_s.iter().chain(target_v).map(|x| -x).collect();
    let mut a = vec![0.0; m * nv];
    for i in 0..m {
        a[i * nv + i] = -1.0;
        a[i * nv + m..(i + 1) * nv].copy_from_slice(cs.row(i));
    }
    QpProblem {
        h,
        g,
        a,
        b: cs.rhs_all().to_vec(),
        nonneg: vec![true; nv],
    }
}

/// Objective `||s - a||^2 + ||v - w||^2`.
pub fn coupling_objective(s: &[f64], v: &[f64], target_s: &[f64], target_v: &[f64]) -> f64 {
    s.iter()
        .zip(target_s)
        .chain(v.iter().zip(target_v))
        .map(|(x, t)| (x - t) * (x - t))
        .sum()
}
