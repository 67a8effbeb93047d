//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The process fails only when a
//! criterion fails that is not listed in `KNOWN_FAILURES`.

use std::process::ExitCode;
use std::time::Instant;

use maxcon::model::{complementarity_residual, feasibility_violation, lift_theta};
use maxcon::reformulate::{
    affinity_residual, fractional_to_linear, homography_residual, triangulation_residual, FractionalResidual, PointMatch,
    TrackObservation,
};
use maxcon::solvers::{is_vertex, solve_lp, solve_qp, solve_rank_one_qp, LpProblem, LpStatus, QpProblem, QpStatus};
use maxcon::{
    am_solve_report, consensus, ep_solve_report, exact_max_consensus, ransac, AmConfig, EpConfig, ModelParams,
    RansacConfig,
};
use maxcon_harness::config::{preset, ExperimentConfig};
use maxcon_harness::experiment::{run_method, Init, Method, MethodParams};
use maxcon_harness::problem::Problem;
use maxcon_harness::synth::{synth_linear, SynthConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sub-items that fail for reasons recorded in the README.
const KNOWN_FAILURES: &[(usize, &str)] = &[(5, "monotone")];

struct Outcome {
    /// `(name, passed, detail)` per sub-item.
    items: Vec<(&'static str, bool, String)>,
}

impl Outcome {
    fn new() -> Self {
        Self { items: Vec::new() }
    }

    fn check(&mut self, name: &'static str, ok: bool, detail: String) {
        self.items.push((name, ok, detail));
    }
}

fn linear_problem(n: usize, d: usize, frac: f64, balanced: bool, seed: u64) -> Problem {
    let s = synth_linear(&SynthConfig {
        n,
        d,
        outlier_fraction: frac,
        balanced,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    Problem::regression(s.data, 0.1).unwrap()
}

fn params() -> MethodParams {
    MethodParams {
        ransac: RansacConfig::default(),
        ep: EpConfig::default(),
        am: AmConfig::default(),
    }
}

// ---------------------------------------------------------------------------
// 1 and 2: Frank-Wolfe monotonicity and EP feasibility on one instance set.

fn criteria_1_2(out1: &mut Outcome, out2: &mut Outcome) {
    let cfg = EpConfig::default();
    let (mut loops, mut bad_steps, mut long_loops, mut errors) = (0usize, 0usize, 0usize, 0usize);
    let (mut converged, mut q_bad, mut count_bad, mut worst_q) = (0usize, 0usize, 0usize, 0.0f64);
    for seed in 0..200 {
        let p = linear_problem(100, 8, 0.4, true, 1000 + seed);
        let init = ransac(&p.source(), &p.cs, &RansacConfig::with_seed(seed)).unwrap();
        let r = match ep_solve_report(&init.theta, &p.cs, &cfg) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("  instance {seed}: {e}");
                errors += 1;
                continue;
            }
        };
        for fw in &r.inner {
            loops += 1;
            let slack = 1e-9 * (1.0 + fw.penalties[0].abs());
            bad_steps += fw.penalties.windows(2).filter(|w| w[1] > w[0] + slack).count();
            if fw.iterations > 1000 || !fw.converged {
                long_loops += 1;
            }
        }
        if !r.fit.converged {
            continue;
        }
        converged += 1;
        let scale = 1.0 + p.cs.rhs_norm_inf();
        let q = complementarity_residual(&r.state, &p.cs);
        worst_q = worst_q.max(q / scale);
        if q > 1e-6 * scale {
            q_bad += 1;
        }
        let v = lift_theta(&r.fit.theta);
        let m = p.cs.num_rows();
        let kept = m as f64 - r.state.u.iter().sum::<f64>();
        let satisfied = (0..m).filter(|&i| p.cs.row_residual(i, &v) <= 0.0).count();
        let band = (0..m)
            .filter(|&i| p.cs.row_residual(i, &v).abs() <= p.cs.band(i))
            .count();
        if (kept - satisfied as f64).abs() > band as f64 + 1e-9 {
            count_bad += 1;
        }
    }
    out1.check(
        "monotone",
        bad_steps == 0 && errors == 0,
        format!("{loops} inner loops, {bad_steps} increasing steps, {errors} errors"),
    );
    out1.check("terminates", long_loops == 0, format!("{long_loops} loops over 1000 iterations"));
    out2.check(
        "feasible",
        q_bad == 0 && converged > 0,
        format!("{converged}/200 converged, worst Q/(1+|b|) = {worst_q:.2e}"),
    );
    out2.check("count", count_bad == 0, format!("{count_bad} runs with M - sum(u) off by more than the band"));
}

// ---------------------------------------------------------------------------
// 3: gap to the exact optimum on small problems.

fn criterion_3(out: &mut Outcome) {
    let (mut gap, mut not_worse, mut worst_drop) = (0usize, 0usize, 0i64);
    let n = 100;
    for seed in 0..n {
        let p = linear_problem(20, 2, 0.4, true, 2000 + seed);
        let exact = exact_max_consensus(&p.cs, 2).unwrap().best_consensus;
        let rs = run_method(&p, Method::Rs, seed, &params()).unwrap().consensus;
        let ep = run_method(&p, Method::Ep(Init::Rs), seed, &params()).unwrap().consensus;
        assert!(ep <= exact && rs <= exact, "instance {seed} beats the exact optimum");
        gap += exact - ep;
        if ep >= rs {
            not_worse += 1;
        }
        worst_drop = worst_drop.max(rs as i64 - ep as i64);
    }
    let mean = gap as f64 / n as f64;
    out.check("gap", mean <= 1.0, format!("mean gap {mean:.2}"));
    out.check(
        "vs init",
        not_worse as f64 >= 0.95 * n as f64,
        format!("EP-RS >= RS in {not_worse}/{n}"),
    );
    out.check("worst drop", worst_drop <= 1, format!("largest drop {worst_drop}"));
}

// ---------------------------------------------------------------------------
// 4: recovery from a least-squares start on unbalanced data.

fn criterion_4(out: &mut Outcome) {
    let (mut lsq, mut ep_lsq, mut ep_rs) = (0.0, 0.0, 0.0);
    for seed in 0..50 {
        let p = linear_problem(500, 8, 0.4, false, 3000 + seed);
        lsq += run_method(&p, Method::Lsq, seed, &params()).unwrap().consensus as f64;
        ep_lsq += run_method(&p, Method::Ep(Init::Lsq), seed, &params()).unwrap().consensus as f64;
        ep_rs += run_method(&p, Method::Ep(Init::Rs), seed, &params()).unwrap().consensus as f64;
    }
    let (lsq, ep_lsq, ep_rs) = (lsq / 50.0, ep_lsq / 50.0, ep_rs / 50.0);
    out.check(
        "EP-LSQ",
        ep_lsq >= 0.95 * ep_rs,
        format!("EP-LSQ {ep_lsq:.1} vs EP-RS {ep_rs:.1}"),
    );
    out.check("LSQ", lsq < 0.5 * ep_lsq, format!("LSQ {lsq:.1}"));
}

// ---------------------------------------------------------------------------
// 5: AM convergence.

fn criterion_5(out: &mut Outcome) {
    let cfg = AmConfig::default();
    let n = 100;
    let (mut small_res, mut converged, mut infeasible, mut not_worse, mut monotone) = (0, 0, 0, 0, 0);
    let mut worst_feas = 0.0f64;
    for seed in 0..n {
        let p = linear_problem(100, 8, 0.4, true, 4000 + seed);
        let init = ransac(&p.source(), &p.cs, &RansacConfig::with_seed(seed)).unwrap();
        let r = am_solve_report(&init.theta, &p.cs, &cfg).unwrap();
        if r.coupling_residual <= 1e-4 {
            small_res += 1;
        }
        if r.fit.converged {
            converged += 1;
            let scale = 1.0 + p.cs.rhs_norm_inf();
            let f = feasibility_violation(&r.state.exported(), &p.cs) / scale;
            worst_feas = worst_feas.max(f);
            if f > 1e-6 {
                infeasible += 1;
            }
        }
        let c = consensus(&r.fit.theta, &p.cs, 0.0).unwrap().count;
        if c >= init.consensus {
            not_worse += 1;
        }
        if r.monotone_after_onset() {
            monotone += 1;
        }
    }
    let frac = |k: i32| k as f64 / n as f64;
    out.check("residual", frac(small_res) >= 0.95, format!("residual <= 1e-4 in {small_res}/{n}"));
    out.check(
        "feasible",
        infeasible == 0,
        format!("{converged} converged, worst scaled violation {worst_feas:.2e}"),
    );
    out.check("vs init", frac(not_worse) >= 0.90, format!("AM >= init in {not_worse}/{n}"));
    out.check(
        "monotone",
        frac(monotone) >= 0.95,
        format!("non-increasing after onset in {monotone}/{n}"),
    );
}

// ---------------------------------------------------------------------------
// 6: LP solver against vertex enumeration.

/// Largest enumeration allowed per LP: subsets of the constraint list.
const ENUM_BUDGET: f64 = 2e5;

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Solves the `n x n` system `rows[idx] x = rhs[idx]` by Gaussian elimination
/// with partial pivoting. `None` when numerically singular.
fn solve_square(rows: &[Vec<f64>], rhs: &[f64], idx: &[usize], x: &mut [f64]) -> Option<()> {
    let n = idx.len();
    let mut m = [[0.0f64; 11]; 10];
    for (i, &r) in idx.iter().enumerate() {
        m[i][..n].copy_from_slice(&rows[r]);
        m[i][n] = rhs[r];
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = m[r][n];
        for c in r + 1..n {
            s -= m[r][c] * x[c];
        }
        x[r] = s / m[r][r];
    }
    Some(())
}

/// Best objective over every basic point of the polytope.
fn enumerate_vertices(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars();
    let mut rows: Vec<Vec<f64>> = (0..p.num_rows()).map(|r| p.row(r).to_vec()).collect();
    let mut rhs = p.b.clone();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        rows.push(e.clone());
        rhs.push(-p.lower[j]);
        if p.upper[j].is_finite() {
            e[j] = 1.0;
            rows.push(e);
            rhs.push(p.upper[j]);
        }
    }
    let k = rows.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut x = vec![0.0; n];
    let mut best: Option<f64> = None;
    loop {
        if solve_square(&rows, &rhs, &idx, &mut x).is_some() && p.violation(&x) <= 1e-9 {
            let f = p.objective_at(&x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < k - n + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A feasible LP with at most 10 variables and 20 rows, bounded by a
/// sum row. Degenerate instances pass several rows through one point.
fn random_lp(rng: &mut ChaCha8Rng, degenerate: bool) -> LpProblem {
    let (n, m, upper) = loop {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=20);
        let upper: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let k = m + n + upper.iter().filter(|&&u| u).count();
        if binom(k, n) <= ENUM_BUDGET {
            break (n, m, upper);
        }
    };
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut a = Vec::with_capacity(m * n);
    let mut b = Vec::with_capacity(m);
    for _ in 0..m - 1 {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ax: f64 = row.iter().zip(&x0).map(|(a, x)| a * x).sum();
        b.push(if degenerate { ax } else { ax + rng.random_range(0.0..1.0) });
        a.extend(row);
    }
    a.extend(vec![1.0; n]);
    b.push(1.5 * n as f64);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let hi = upper
        .iter()
        .map(|&u| if u { rng.random_range(1.0..3.0) } else { f64::INFINITY })
        .collect();
    LpProblem::new(c, a, b).with_bounds(vec![0.0; n], hi)
}

fn criterion_6(out: &mut Outcome) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut wrong, mut not_vertex, mut not_optimal, mut worst) = (0, 0, 0, 0.0f64);
    let mut solver_time = 0.0;
    let mut largest = (0, 0);
    for trial in 0..500 {
        let p = random_lp(&mut rng, trial % 5 == 0);
        if p.num_vars() * p.num_rows() > largest.0 * largest.1 {
            largest = (p.num_vars(), p.num_rows());
        }
        let t = Instant::now();
        let sol = solve_lp(&p).unwrap();
        solver_time += t.elapsed().as_secs_f64();
        if sol.status != LpStatus::Optimal || p.violation(&sol.x) > 1e-8 {
            not_optimal += 1;
            continue;
        }
        let want = enumerate_vertices(&p).expect("feasible bounded LP has a vertex");
        let err = (sol.objective - want).abs();
        worst = worst.max(err);
        if err > 1e-7 {
            wrong += 1;
        }
        if !is_vertex(&p, &sol.x) {
            not_vertex += 1;
        }
    }
    out.check(
        "objective",
        wrong == 0 && not_optimal == 0,
        format!("{wrong} mismatches, {not_optimal} not optimal, worst error {worst:.1e}, largest {}x{}", largest.0, largest.1),
    );
    out.check("vertex", not_vertex == 0, format!("{not_vertex} non-vertex optima"));
    solver_time
}

// ---------------------------------------------------------------------------
// 7: QP solver against long-horizon first-order references.

/// `min 1/2 x^T H x + g^T x  s.t.  A x <= b` with `H` positive definite, by
/// accelerated projected gradient on the dual.
fn dual_reference(h: &DMatrix<f64>, g: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let hinv = h.clone().try_inverse().unwrap();
    let q = a * &hinv * a.transpose();
    let lip = q.symmetric_eigen().eigenvalues.max().max(1e-12);
    let dual = |lam: &DVector<f64>| {
        let t = g + a.transpose() * lam;
        -0.5 * t.dot(&(&hinv * &t)) - b.dot(lam)
    };
    let mut lam = DVector::<f64>::zeros(b.len());
    let mut y = lam.clone();
    let mut tk = 1.0f64;
    for _ in 0..100_000 {
        let grad = -(a * (&hinv * (g + a.transpose() * &y))) - b;
        let next = (&y + grad / lip).map(|x| x.max(0.0));
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        y = &next + (&next - &lam) * ((tk - 1.0) / tn);
        lam = next;
        tk = tn;
    }
    dual(&lam)
}

/// Same problem over the box `0 <= x <= hi` with `H` only semidefinite, by
/// accelerated projected gradient on the primal.
fn box_reference(h: &DMatrix<f64>, g: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    let lip = h.clone().symmetric_eigen().eigenvalues.max().max(1e-12);
    let f = |x: &DVector<f64>| 0.5 * x.dot(&(h * x)) + g.dot(x);
    let clamp = |x: DVector<f64>| x.zip_map(hi, |v, u| v.clamp(0.0, u));
    let mut x = DVector::<f64>::zeros(g.len());
    let mut y = x.clone();
    let mut tk = 1.0f64;
    for _ in 0..100_000 {
        let next = clamp(&y - (h * &y + g) / lip);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        y = &next + (&next - &x) * ((tk - 1.0) / tn);
        x = next;
        tk = tn;
    }
    f(&x)
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r * c).map(|k| m[(k / c, k % c)]).collect()
}

fn criterion_7(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut kkt_bad, mut ref_bad, mut failed) = (0, 0, 0);
    let (mut worst_kkt, mut worst_err) = (0.0f64, 0.0f64);
    for trial in 0..200 {
        let n = rng.random_range(1..=6);
        let (problem, reference) = if trial % 2 == 0 {
            // Positive definite with general rows.
            let m = rng.random_range(0..=6);
            let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
            let g = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
            let mut a = DMatrix::from_fn(m + n, n, |_, _| rng.random_range(-1.0..1.0));
            let mut b = DVector::zeros(m + n);
            for r in 0..m {
                b[r] = a.row(r).dot(&x0.transpose()) + rng.random_range(0.0..0.5);
            }
            for j in 0..n {
                a.row_mut(m + j).fill(0.0);
                a[(m + j, j)] = -1.0;
            }
            let reference = dual_reference(&h, &g, &a, &b);
            let p = QpProblem {
                h: flat(&h),
                g: g.iter().copied().collect(),
                a: flat(&a.rows(0, m).into_owned()),
                b: b.rows(0, m).iter().copied().collect(),
                nonneg: vec![true; n],
            };
            (p, reference)
        } else {
            // Rank-deficient Hessian over a box.
            let r = rng.random_range(0..n.max(1));
            let l = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
            let h = &l * l.transpose();
            let g = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let hi = DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0));
            let reference = box_reference(&h, &g, &hi);
            let p = QpProblem {
                h: flat(&h),
                g: g.iter().copied().collect(),
                a: flat(&DMatrix::identity(n, n)),
                b: hi.iter().copied().collect(),
                nonneg: vec![true; n],
            };
            (p, reference)
        };
        let sol = solve_qp(&problem).unwrap();
        if sol.status != QpStatus::Optimal {
            failed += 1;
            continue;
        }
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        if sol.kkt_residual > 1e-8 {
            kkt_bad += 1;
        }
        let err = (sol.objective - reference).abs();
        worst_err = worst_err.max(err);
        if err > 1e-6 {
            ref_bad += 1;
        }
    }
    out.check(
        "kkt",
        kkt_bad == 0 && failed == 0,
        format!("{kkt_bad} over 1e-8, {failed} not optimal, worst {worst_kkt:.1e}"),
    );
    out.check("reference", ref_bad == 0, format!("{ref_bad} over 1e-6, worst {worst_err:.1e}"));
}

// ---------------------------------------------------------------------------
// 8: closed-form rank-one QP.

fn rank_one_objective(c: &[f64], k: f64, w: &[f64], v: &[f64]) -> f64 {
    let cv: f64 = c.iter().zip(v).map(|(a, b)| a * b).sum();
    (cv - k).powi(2) + v.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

fn criterion_8(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_grad, mut worst_diff) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(1..=10);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let k = rng.random_range(-3.0..3.0);
        let v = solve_rank_one_qp(&c, k, &w).unwrap();
        let step = 1e-4;
        let mut gnorm = 0.0f64;
        for j in 0..n {
            let (mut vp, mut vm) = (v.clone(), v.clone());
            vp[j] += step;
            vm[j] -= step;
            let g = (rank_one_objective(&c, k, &w, &vp) - rank_one_objective(&c, k, &w, &vm)) / (2.0 * step);
            gnorm += g * g;
        }
        worst_grad = worst_grad.max(gnorm.sqrt());
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = 2.0 * (c[i] * c[j] + if i == j { 1.0 } else { 0.0 });
            }
        }
        let qp = solve_qp(&QpProblem {
            h,
            g: (0..n).map(|i| -2.0 * (w[i] + k * c[i])).collect(),
            a: vec![],
            b: vec![],
            nonneg: vec![false; n],
        })
        .unwrap();
        for (a, b) in qp.x.iter().zip(&v) {
            worst_diff = worst_diff.max((a - b).abs());
        }
    }
    out.check("solve_qp", worst_diff <= 1e-9, format!("largest difference {worst_diff:.1e}"));
    out.check("gradient", worst_grad <= 1e-10, format!("largest gradient norm {worst_grad:.1e}"));
}

// ---------------------------------------------------------------------------
// 9: four linear rows against the direct fractional test.

/// Direct reprojection test: `prediction` is the homogeneous model output.
fn direct_inlier(pred: [f64; 3], target: [f64; 2], epsilon: f64) -> Option<(bool, f64)> {
    if pred[2] <= 0.0 {
        return None;
    }
    let err = (pred[0] / pred[2] - target[0]).abs() + (pred[1] / pred[2] - target[1]).abs();
    Some((err <= epsilon, err))
}

fn rows_accept(res: &FractionalResidual, theta: &[f64], epsilon: f64) -> bool {
    let v = lift_theta(&ModelParams::new(theta.to_vec()).unwrap());
    fractional_to_linear(res, epsilon)
        .unwrap()
        .iter()
        .all(|(c, b)| c.iter().zip(&v).map(|(a, x)| a * x).sum::<f64>() <= *b)
}

fn criterion_9(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pt = |rng: &mut ChaCha8Rng, r: f64| -> [f64; 2] { [rng.random_range(-r..r), rng.random_range(-r..r)] };
    for kind in ["homography", "affinity", "triangulation"] {
        let (mut samples, mut disagree, mut inliers) = (0, 0, 0);
        while samples < 1000 {
            let (theta, res, pred, target): (Vec<f64>, FractionalResidual, [f64; 3], [f64; 2]) = match kind {
                "homography" => {
                    let mut theta: Vec<f64> = (0..8).map(|_| rng.random_range(-0.3..0.3)).collect();
                    theta[0] += 1.0;
                    theta[4] += 1.0;
                    let m = PointMatch {
                        u: pt(&mut rng, 2.0),
                        v: pt(&mut rng, 2.0),
                    };
                    let hu = |r: usize| {
                        let h = |k: usize| if r == 2 && k == 2 { 1.0 } else { theta[3 * r + k] };
                        h(0) * m.u[0] + h(1) * m.u[1] + h(2)
                    };
                    let pred = [hu(0), hu(1), hu(2)];
                    (theta.clone(), homography_residual(&m), pred, m.v)
                }
                "affinity" => {
                    let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
                    let m = PointMatch {
                        u: pt(&mut rng, 2.0),
                        v: pt(&mut rng, 2.0),
                    };
                    let a = |r: usize| theta[3 * r] * m.v[0] + theta[3 * r + 1] * m.v[1] + theta[3 * r + 2];
                    (theta.clone(), affinity_residual(&m), [a(0), a(1), 1.0], m.u)
                }
                _ => {
                    let theta: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                    let camera: [[f64; 4]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
                    let obs = TrackObservation {
                        x: pt(&mut rng, 2.0),
                        camera,
                    };
                    let pred = std::array::from_fn(|i| (0..3).map(|j| camera[i][j] * theta[j]).sum::<f64>() + camera[i][3]);
                    (theta, triangulation_residual(&obs), pred, obs.x)
                }
            };
            // Thresholds spread around the actual error give both outcomes.
            let Some((_, err)) = direct_inlier(pred, target, 1.0) else { continue };
            let epsilon = (err * 2f64.powf(rng.random_range(-1.0..1.0))).max(1e-6);
            let (direct, _) = direct_inlier(pred, target, epsilon).unwrap();
            samples += 1;
            inliers += usize::from(direct);
            if direct != rows_accept(&res, &theta, epsilon) {
                disagree += 1;
            }
        }
        let name: &'static str = match kind {
            "homography" => "homography",
            "affinity" => "affinity",
            _ => "triangulation",
        };
        out.check(name, disagree == 0, format!("{kind}: {disagree} disagreements, {inliers}/1000 inliers"));
    }
}

// ---------------------------------------------------------------------------
// 10: end-to-end timing.

fn criterion_10(out: &mut Outcome) {
    let p = linear_problem(500, 8, 0.6, true, 10);
    let ep = run_method(&p, Method::Ep(Init::Lsq), 0, &params()).unwrap();
    let am = run_method(&p, Method::Am(Init::Lsq), 0, &params()).unwrap();
    out.check(
        "EP-LSQ",
        ep.wall_time < 60.0,
        format!("EP-LSQ {:.2} s, consensus {}", ep.wall_time, ep.consensus),
    );
    out.check(
        "AM-LSQ",
        am.wall_time < 300.0,
        format!("AM-LSQ {:.2} s, consensus {}", am.wall_time, am.consensus),
    );
}

// ---------------------------------------------------------------------------
// 11: reproducible bench output.

fn criterion_11(out: &mut Outcome) {
    for (name, overrides) in [
        ("linear-balanced", vec!["n=150", "runs=3"]),
        ("homography-geometric", vec!["n=80", "runs=3", "methods=RS,LORS,EP-RS,AM-LINF"]),
    ] {
        let overrides: Vec<String> = overrides.into_iter().map(String::from).collect();
        let cfg = ExperimentConfig::parse(preset(name).unwrap(), &overrides).unwrap();
        let a = maxcon_harness::bench(&cfg).unwrap().without_times().to_json().unwrap();
        let b = maxcon_harness::bench(&cfg).unwrap().without_times().to_json().unwrap();
        let label: &'static str = if name == "linear-balanced" { "linear" } else { "geometric" };
        out.check(label, a == b, format!("{name}: {} bytes", a.len()));
    }
}

fn main() -> ExitCode {
    let mut unexpected = 0;
    let mut report = |k: usize, seconds: f64, limit: Option<f64>, mut o: Outcome| {
        if let Some(limit) = limit {
            o.check("runtime", seconds < limit, format!("{seconds:.1} s (limit {limit} s)"));
        }
        let failed: Vec<&str> = o.items.iter().filter(|(_, ok, _)| !ok).map(|(n, _, _)| *n).collect();
        let known = failed.iter().all(|f| KNOWN_FAILURES.contains(&(k, *f)));
        let status = match (failed.is_empty(), known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        let details: Vec<String> = o.items.iter().map(|(_, _, d)| d.clone()).collect();
        println!("criterion {k}: {status}  {}", details.join("; "));
        if !failed.is_empty() && !known {
            unexpected += 1;
        }
    };

    let t = Instant::now();
    let (mut o1, mut o2) = (Outcome::new(), Outcome::new());
    criteria_1_2(&mut o1, &mut o2);
    let s = t.elapsed().as_secs_f64();
    report(1, s, Some(300.0), o1);
    report(2, s, None, o2);

    let mut timed = |k: usize, limit: Option<f64>, f: &dyn Fn(&mut Outcome)| {
        let t = Instant::now();
        let mut o = Outcome::new();
        f(&mut o);
        report(k, t.elapsed().as_secs_f64(), limit, o);
    };
    timed(3, Some(120.0), &criterion_3);
    timed(4, Some(600.0), &criterion_4);
    timed(5, None, &criterion_5);
    timed(6, None, &|o| {
        let solver = criterion_6(o);
        o.check("runtime", solver < 60.0, format!("solver time {solver:.2} s (limit 60 s)"));
    });
    timed(7, None, &criterion_7);
    timed(8, None, &criterion_8);
    timed(9, None, &criterion_9);
    timed(10, None, &criterion_10);
    timed(11, None, &criterion_11);

    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    }
}
