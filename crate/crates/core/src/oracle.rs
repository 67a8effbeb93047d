//! Exact maximum consensus for small linear-regression instances by
//! enumerating intersections of constraint boundaries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{consensus, ConstraintSet, ModelParams};

pub const MAX_DATA: usize = 30;
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_theta: ModelParams,
    pub best_consensus: usize,
    pub candidates_evaluated: usize,
    /// Every boundary system was singular; only the fallback candidates ran.
    pub fallback_only: bool,
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < n - k + pos {
            idx[pos] += 1;
            for q in pos + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

struct Best {
    count: usize,
    theta: Vec<f64>,
    evaluated: usize,
}

impl Best {
    fn offer(&mut self, theta: &[f64], cs: &ConstraintSet) -> Result<()> {
        self.evaluated += 1;
        let Ok(params) = ModelParams::new(theta.to_vec()) else {
            return Ok(());
        };
        let c = consensus(&params, cs, 0.0)?.count;
        if c > self.count {
            self.count = c;
            self.theta = theta.to_vec();
        }
        Ok(())
    }

    fn offer_with_perturbations(&mut self, theta: &[f64], cs: &ConstraintSet) -> Result<()> {
        self.offer(theta, cs)?;
        let h = 1e-7 * (1.0 + theta.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        let mut p = theta.to_vec();
        for k in 0..theta.len() {
            for sign in [1.0, -1.0] {
                p[k] = theta[k] + sign * h;
                self.offer(&p, cs)?;
            }
            p[k] = theta[k];
        }
        Ok(())
    }
}

/// Best datum-level consensus over all boundary intersections.
///
/// Restricted to two-row (linear regression) groups with `N <= 30` and
/// `d <= 3`.
pub fn exact_max_consensus(cs: &ConstraintSet, d: usize) -> Result<OracleResult> {
    if d != cs.model_dim() {
        return Err(Error::DimensionMismatch {
            what: "oracle model dimension",
            expected: cs.model_dim(),
            found: d,
        });
    }
    if cs.num_data() > MAX_DATA || d > MAX_DIM {
        return Err(Error::Guard(format!(
            "exact search needs N <= {MAX_DATA} and d <= {MAX_DIM}, got N = {} and d = {d}",
            cs.num_data()
        )));
    }
    if cs.groups().iter().any(|g| g.len() != 2) {
        return Err(Error::Guard("exact search supports two-row groups only".into()));
    }
    let m = cs.num_rows();
    let mut best = Best {
        count: 0,
        theta: vec![0.0; d],
        evaluated: 0,
    };
    best.offer(&vec![0.0; d], cs)?;
    // Per-datum exact fits: minimum-norm point on the datum's centre line.
    for g in cs.groups() {
        let (i, k) = (g[0], g[1]);
        let a = &cs.row(i)[..d];
        let centre = 0.5 * (cs.rhs(i) - cs.rhs(k));
        let aa: f64 = a.iter().map(|x| x * x).sum();
        if aa > 0.0 {
            let theta: Vec<f64> = a.iter().map(|x| x * centre / aa).collect();
            best.offer(&theta, cs)?;
        }
    }
    let mut any_regular = false;
    if m >= d {
        let mut idx: Vec<usize> = (0..d).collect();
        loop {
            let a = DMatrix::from_fn(d, d, |r, c| cs.row(idx[r])[c]);
            let b = DVector::from_fn(d, |r, _| cs.rhs(idx[r]));
            let regular = a.clone().svd(false, false).singular_values.min() > 1e-12;
            if regular {
                if let Some(theta) = a.lu().solve(&b) {
                    any_regular = true;
                    let theta: Vec<f64> = theta.iter().copied().collect();
                    best.offer_with_perturbations(&theta, cs)?;
                }
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    if !any_regular {
        log::warn!("oracle: every boundary system was singular");
    }
    Ok(OracleResult {
        best_theta: ModelParams::new(best.theta)?,
        best_consensus: best.count,
        candidates_evaluated: best.evaluated,
        fallback_only: !any_regular,
    })
}
